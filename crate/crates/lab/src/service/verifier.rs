use serde::{Deserialize, Serialize};

/// Humanness check run before a session is created.
#[derive(Debug, Clone)]
pub enum Verifier {
    /// Accepts any non-empty proof.
    Stub,
    /// POSTs `{"proof": ...}` and expects `{"success": bool}`.
    External { url: String, client: reqwest::Client },
}

#[derive(Serialize)]
struct Request<'a> {
    proof: &'a str,
}

#[derive(Deserialize)]
struct Reply {
    success: bool,
}

impl Verifier {
    /// `stub` or an http(s) URL.
    pub fn from_mode(mode: &str) -> Result<Self, String> {
        match mode {
            "stub" => Ok(Verifier::Stub),
            url if url.starts_with("http://") || url.starts_with("https://") => Ok(Verifier::External {
                url: url.into(),
                client: reqwest::Client::new(),
            }),
            other => Err(format!("verifier must be `stub` or an http(s) URL, got {other:?}")),
        }
    }

    pub async fn verify(&self, proof: &str) -> Result<bool, String> {
        match self {
            Verifier::Stub => Ok(!proof.trim().is_empty()),
            Verifier::External { url, client } => {
                let reply = client
                    .post(url)
                    .json(&Request { proof })
                    .send()
                    .await
                    .map_err(|e| e.to_string())?
                    .error_for_status()
                    .map_err(|e| e.to_string())?;
                Ok(reply.json::<Reply>().await.map_err(|e| e.to_string())?.success)
            }
        }
    }
}
