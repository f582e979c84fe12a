//! Async client for the draft session service.

use herodraft_core::api::{
    ApiError, CreateSession, Created, EngineMoveResponse, Mutation, PickRequest, Recommendations, Roster, SessionView, WhatIf, WhatIfRequest,
};
use herodraft_core::HeroId;
use reqwest::{Client as Http, RequestBuilder};
use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{status} {}: {}", .error.code, .error.message)]
    Api { status: u16, error: ApiError },
    #[error(transparent)]
    Http(#[from] reqwest::Error),
}

impl ClientError {
    /// The service's error code, if the server answered with one.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { error, .. } => Some(&error.code),
            ClientError::Http(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    http: Http,
    base: String,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            http: Http::new(),
            base: base.into().trim_end_matches('/').to_string(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn send<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T, ClientError> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let error = resp.json::<ApiError>().await.unwrap_or_else(|e| ApiError {
            code: "unknown".into(),
            message: e.to_string(),
        });
        Err(ClientError::Api {
            status: status.as_u16(),
            error,
        })
    }

    pub async fn create_session(&self, req: &CreateSession) -> Result<Created, ClientError> {
        self.send(self.http.post(self.url("/api/sessions")).json(req)).await
    }

    pub async fn session(&self, id: u64) -> Result<SessionView, ClientError> {
        self.send(self.http.get(self.url(&format!("/api/sessions/{id}")))).await
    }

    pub async fn pick(&self, id: u64, hero_id: HeroId, request_id: Option<u64>) -> Result<SessionView, ClientError> {
        let body = PickRequest { hero_id, request_id };
        self.send(self.http.post(self.url(&format!("/api/sessions/{id}/picks"))).json(&body)).await
    }

    pub async fn engine_move(&self, id: u64, request_id: Option<u64>) -> Result<EngineMoveResponse, ClientError> {
        let body = Mutation { request_id };
        self.send(self.http.post(self.url(&format!("/api/sessions/{id}/engine-move"))).json(&body)).await
    }

    pub async fn recommendations(&self, id: u64, top_k: Option<usize>) -> Result<Recommendations, ClientError> {
        let mut url = self.url(&format!("/api/sessions/{id}/recommendations"));
        if let Some(k) = top_k {
            url.push_str(&format!("?top_k={k}"));
        }
        self.send(self.http.get(url)).await
    }

    pub async fn whatif(&self, id: u64, hero_id: HeroId, top_k: Option<usize>) -> Result<WhatIf, ClientError> {
        let body = WhatIfRequest { hero_id, top_k };
        self.send(self.http.post(self.url(&format!("/api/sessions/{id}/whatif"))).json(&body)).await
    }

    pub async fn undo(&self, id: u64, request_id: Option<u64>) -> Result<SessionView, ClientError> {
        let body = Mutation { request_id };
        self.send(self.http.post(self.url(&format!("/api/sessions/{id}/undo"))).json(&body)).await
    }

    pub async fn heroes(&self) -> Result<Roster, ClientError> {
        self.send(self.http.get(self.url("/api/heroes"))).await
    }
}
