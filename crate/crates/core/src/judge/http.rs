//! Judge backed by an OpenAI-compatible chat-completions endpoint.

use crate::judge::{
    render_prompt, run_query, JudgeEndpointConfig, JudgeError, JudgeGateway, JudgeRequest,
    JudgeVerdict,
};
use crate::net::ChatCompletionsClient;

pub struct HttpJudge {
    client: ChatCompletionsClient,
}

impl HttpJudge {
    pub fn new(cfg: JudgeEndpointConfig) -> Result<Self, JudgeError> {
        let client = ChatCompletionsClient::new(cfg).map_err(|source| JudgeError::Unavailable {
            attempts: 0,
            source,
        })?;
        Ok(HttpJudge { client })
    }
}

impl JudgeGateway for HttpJudge {
    fn query(&self, req: &JudgeRequest) -> Result<JudgeVerdict, JudgeError> {
        let prompt = render_prompt(req)?;
        let retries = self.client.config().max_retries;
        run_query(req.template, retries, || self.client.complete_once(&prompt))
    }
}

/// One-shot convenience: build a client for `cfg`, send the request, parse
/// the verdict with the configured retry budget.
pub fn query_judge(
    req: &JudgeRequest,
    cfg: &JudgeEndpointConfig,
) -> Result<JudgeVerdict, JudgeError> {
    HttpJudge::new(cfg.clone())?.query(req)
}
