//! What the service keeps about a participant. Everything here is coarse by
//! construction: brackets, ISO country codes and browser families.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    Other,
    Undisclosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeBracket {
    #[serde(rename = "18-24")]
    A18To24,
    #[serde(rename = "25-34")]
    A25To34,
    #[serde(rename = "35-44")]
    A35To44,
    #[serde(rename = "45-54")]
    A45To54,
    #[serde(rename = "55-64")]
    A55To64,
    #[serde(rename = "65+")]
    A65Plus,
}

impl AgeBracket {
    pub fn from_age(age: u32) -> Option<Self> {
        Some(match age {
            0..=17 => return None,
            18..=24 => Self::A18To24,
            25..=34 => Self::A25To34,
            35..=44 => Self::A35To44,
            45..=54 => Self::A45To54,
            55..=64 => Self::A55To64,
            _ => Self::A65Plus,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechnicalAbility {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: Gender,
    pub age_bracket: AgeBracket,
    /// ISO 3166-1 alpha-2.
    pub country: String,
    pub technical_ability: TechnicalAbility,
}

impl Demographics {
    pub fn validate(&self) -> Result<(), String> {
        let c = self.country.as_bytes();
        if c.len() != 2 || !c.iter().all(u8::is_ascii_uppercase) {
            return Err(format!("country {:?} is not an ISO 3166-1 alpha-2 code", self.country));
        }
        Ok(())
    }
}

/// Client details as stored: families only, never the raw user agent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientInfo {
    pub browser_family: String,
    pub os_family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_height: Option<u32>,
}

impl ClientInfo {
    pub fn from_user_agent(ua: &str, video_width: Option<u32>, video_height: Option<u32>) -> Self {
        Self {
            browser_family: browser_family(ua).into(),
            os_family: os_family(ua).into(),
            video_width,
            video_height,
        }
    }
}

pub fn browser_family(ua: &str) -> &'static str {
    // order matters: Edge and Opera also announce Chrome, Chrome announces Safari
    let checks: [(&str, &str); 7] = [
        ("Edg/", "Edge"),
        ("Edge/", "Edge"),
        ("OPR/", "Opera"),
        ("Firefox/", "Firefox"),
        ("Chromium/", "Chromium"),
        ("Chrome/", "Chrome"),
        ("Safari/", "Safari"),
    ];
    checks
        .iter()
        .find(|(needle, _)| ua.contains(needle))
        .map_or("Other", |(_, family)| family)
}

pub fn os_family(ua: &str) -> &'static str {
    let checks: [(&str, &str); 6] = [
        ("Android", "Android"),
        ("iPhone", "iOS"),
        ("iPad", "iOS"),
        ("Windows", "Windows"),
        ("Mac OS X", "macOS"),
        ("Linux", "Linux"),
    ];
    checks
        .iter()
        .find(|(needle, _)| ua.contains(needle))
        .map_or("Other", |(_, family)| family)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families() {
        let chrome = "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/120.0 Safari/537.36";
        let edge = "Mozilla/5.0 (Windows NT 10.0) AppleWebKit/537.36 Chrome/120.0 Safari/537.36 Edg/120.0";
        let ff = "Mozilla/5.0 (X11; Linux x86_64; rv:121.0) Gecko/20100101 Firefox/121.0";
        let safari = "Mozilla/5.0 (iPhone; CPU iPhone OS 17_0 like Mac OS X) AppleWebKit/605.1.15 Version/17.0 Mobile/15E148 Safari/604.1";
        assert_eq!((browser_family(chrome), os_family(chrome)), ("Chrome", "Windows"));
        assert_eq!(browser_family(edge), "Edge");
        assert_eq!((browser_family(ff), os_family(ff)), ("Firefox", "Linux"));
        assert_eq!((browser_family(safari), os_family(safari)), ("Safari", "iOS"));
        assert_eq!(browser_family("curl/8"), "Other");
    }

    #[test]
    fn age_brackets() {
        assert_eq!(AgeBracket::from_age(17), None);
        assert_eq!(AgeBracket::from_age(18), Some(AgeBracket::A18To24));
        assert_eq!(AgeBracket::from_age(64), Some(AgeBracket::A55To64));
        assert_eq!(AgeBracket::from_age(90), Some(AgeBracket::A65Plus));
        assert_eq!(serde_json::to_string(&AgeBracket::A65Plus).unwrap(), "\"65+\"");
    }

    #[test]
    fn country_must_be_alpha2() {
        let mut d = Demographics {
            gender: Gender::Undisclosed,
            age_bracket: AgeBracket::A25To34,
            country: "DE".into(),
            technical_ability: TechnicalAbility::High,
        };
        assert!(d.validate().is_ok());
        d.country = "Germany".into();
        assert!(d.validate().is_err());
    }
}
