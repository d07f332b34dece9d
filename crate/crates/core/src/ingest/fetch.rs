//! Client for the open-data permit endpoint: limit/offset pagination with
//! per-page retries and exponential backoff. Pages are plain CSV documents
//! sharing one header; the concatenated pages go through the same parser
//! as a local file, so a fetched registry and a downloaded snapshot are
//! interchangeable.

use super::{parse_permits, IngestError, PermitColumnMap, PermitParse};
use crate::geo::GeoBounds;
use std::time::Duration;
use thiserror::Error;

/// Name of the environment variable carrying the application token.
pub const APP_TOKEN_ENV: &str = "LONGWATCH_APP_TOKEN";

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("page_size {0} outside [1, 50000]")]
    InvalidPageSize(usize),
    #[error("no short page after {pages} pages; refusing to page forever")]
    TooManyPages { pages: usize },
    #[error("HTTP {status} fetching offset {offset} after {attempts} attempts")]
    Http {
        status: u16,
        offset: usize,
        attempts: u32,
    },
    #[error("transport failure fetching offset {offset} after {attempts} attempts: {reason}")]
    Transport {
        offset: usize,
        attempts: u32,
        reason: String,
    },
    #[error(transparent)]
    Parse(#[from] IngestError),
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub endpoint: String,
    pub page_size: usize,
    pub app_token: Option<String>,
    /// Total attempts per page, including the first.
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub backoff_factor: u32,
    /// Upper bound on pages fetched before giving up on a server that
    /// never returns a short page.
    pub max_pages: usize,
    pub limit_param: String,
    pub offset_param: String,
    pub token_header: String,
}

impl FetchConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        FetchConfig {
            endpoint: endpoint.into(),
            page_size: 50_000,
            app_token: None,
            max_attempts: 3,
            backoff_base: Duration::from_secs(1),
            backoff_factor: 2,
            max_pages: 10_000,
            limit_param: "$limit".into(),
            offset_param: "$offset".into(),
            token_header: "X-App-Token".into(),
        }
    }
}

/// Fetch every page of the permit dataset and parse the concatenation.
/// Record-for-record identical to [`parse_permits`] on a downloaded copy.
pub fn fetch_permits(
    cfg: &FetchConfig,
    map: &PermitColumnMap,
    bounds: &GeoBounds,
) -> Result<PermitParse, FetchError> {
    if cfg.page_size == 0 || cfg.page_size > 50_000 {
        return Err(FetchError::InvalidPageSize(cfg.page_size));
    }
    let mut combined = String::new();
    let mut offset = 0usize;
    let mut pages = 0usize;
    loop {
        let body = fetch_page(cfg, offset)?;
        let rows = count_csv_rows(&body);
        append_page(&mut combined, &body);
        if rows < cfg.page_size {
            break;
        }
        pages += 1;
        if pages >= cfg.max_pages.max(1) {
            return Err(FetchError::TooManyPages { pages });
        }
        offset += cfg.page_size;
    }
    Ok(parse_permits(combined.as_bytes(), map, bounds)?)
}

fn fetch_page(cfg: &FetchConfig, offset: usize) -> Result<String, FetchError> {
    let attempts = cfg.max_attempts.max(1);
    let mut last_status: Option<u16> = None;
    let mut last_reason = String::new();
    for attempt in 1..=attempts {
        if attempt > 1 {
            let exp = cfg.backoff_factor.saturating_pow(attempt - 2);
            std::thread::sleep(cfg.backoff_base.saturating_mul(exp));
        }
        let mut request = ureq::get(&cfg.endpoint)
            .query(&cfg.limit_param, cfg.page_size.to_string())
            .query(&cfg.offset_param, offset.to_string());
        if let Some(token) = &cfg.app_token {
            request = request.header(&cfg.token_header, token);
        }
        match request.call() {
            // a 50k-row page can pass the reader's default 10MB cap, so
            // set an explicit generous limit
            Ok(response) => match response
                .into_body()
                .into_with_config()
                .limit(256 * 1024 * 1024)
                .read_to_string()
            {
                Ok(body) => return Ok(body),
                Err(e) => {
                    last_status = None;
                    last_reason = format!("body read failed: {e}");
                }
            },
            Err(ureq::Error::StatusCode(code)) => {
                last_status = Some(code);
            }
            Err(e) => {
                last_status = None;
                last_reason = e.to_string();
            }
        }
    }
    match last_status {
        Some(status) => Err(FetchError::Http {
            status,
            offset,
            attempts,
        }),
        None => Err(FetchError::Transport {
            offset,
            attempts,
            reason: last_reason,
        }),
    }
}

/// Number of data rows in one CSV page (header excluded).
fn count_csv_rows(body: &str) -> usize {
    csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(body.as_bytes())
        .records()
        .count()
}

/// Append a page to the combined document, keeping only the first page's
/// header line.
fn append_page(combined: &mut String, page: &str) {
    let chunk = if combined.is_empty() {
        page
    } else {
        match page.find('\n') {
            Some(pos) => &page[pos + 1..],
            None => "", // header-only page carries no data
        }
    };
    combined.push_str(chunk);
    if !combined.is_empty() && !combined.ends_with('\n') {
        combined.push('\n');
    }
}
