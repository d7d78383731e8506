//! Client for a PubMed-compatible `esearch` endpoint.
//!
//! Every successful search is cached on disk, one JSON file per request,
//! named by the SHA-256 of the query text and date limit. A cached request
//! never touches the network.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_BASE_URL: &str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";
pub const ENV_URL: &str = "MESHFORGE_ENTREZ_URL";
pub const ENV_API_KEY: &str = "MESHFORGE_API_KEY";

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("request for {query:?} failed: {message}")]
    Http { query: String, message: String },
    #[error("request for {query:?} returned HTTP {status}")]
    Status { query: String, status: u16 },
    #[error("bad response for {query:?}: {message}")]
    Parse { query: String, message: String },
    #[error("service error for {query:?}: {message}")]
    Service { query: String, message: String },
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct EntrezConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    /// Ids requested per page.
    pub page_size: usize,
    pub max_retries: u32,
    /// First retry delay; doubled on each further attempt.
    pub backoff: Duration,
    /// Minimum spacing between requests.
    pub min_interval: Duration,
    pub timeout: Duration,
    pub cache_dir: Option<PathBuf>,
}

impl Default for EntrezConfig {
    fn default() -> Self {
        EntrezConfig {
            base_url: DEFAULT_BASE_URL.to_string(),
            api_key: None,
            page_size: 10_000,
            max_retries: 3,
            backoff: Duration::from_millis(500),
            // 3 requests per second without a key
            min_interval: Duration::from_millis(334),
            timeout: Duration::from_secs(60),
            cache_dir: None,
        }
    }
}

impl EntrezConfig {
    /// Defaults overridden by the `MESHFORGE_ENTREZ_URL` and
    /// `MESHFORGE_API_KEY` environment variables. A key raises the rate
    /// limit to 10 requests per second.
    pub fn from_env() -> Self {
        let mut cfg = EntrezConfig::default();
        if let Ok(url) = std::env::var(ENV_URL) {
            cfg.base_url = url;
        }
        if let Ok(key) = std::env::var(ENV_API_KEY) {
            if !key.is_empty() {
                cfg.api_key = Some(key);
                cfg.min_interval = Duration::from_millis(100);
            }
        }
        cfg
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    query: String,
    date_limit: Option<NaiveDate>,
    ids: BTreeSet<String>,
}

/// Cache file name for a request.
pub fn cache_key(query: &str, date_limit: Option<NaiveDate>) -> String {
    let mut h = Sha256::new();
    h.update(query.as_bytes());
    h.update(b"\n");
    if let Some(d) = date_limit {
        h.update(d.to_string().as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

struct Page {
    count: usize,
    ids: Vec<String>,
}

fn parse_page(query: &str, xml: &str) -> Result<Page, RemoteError> {
    let perr = |message: String| RemoteError::Parse { query: query.to_string(), message };
    let doc = roxmltree::Document::parse(xml).map_err(|e| perr(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "eSearchResult" {
        return Err(perr(format!("unexpected root element <{}>", root.tag_name().name())));
    }
    let child = |name: &str| root.children().find(|n| n.has_tag_name(name));
    if let Some(e) = child("ERROR") {
        return Err(RemoteError::Service { query: query.to_string(), message: e.text().unwrap_or("").to_string() });
    }
    let count = child("Count")
        .and_then(|n| n.text())
        .ok_or_else(|| perr("missing <Count>".into()))?
        .trim()
        .parse()
        .map_err(|_| perr("bad <Count>".into()))?;
    let ids = child("IdList")
        .map(|l| l.children().filter(|n| n.has_tag_name("Id")).filter_map(|n| n.text()).map(|t| t.trim().to_string()).collect())
        .unwrap_or_default();
    Ok(Page { count, ids })
}

pub struct EntrezClient {
    config: EntrezConfig,
    http: reqwest::blocking::Client,
    last_request: Mutex<Option<Instant>>,
    cache_lock: Mutex<()>,
}

impl EntrezClient {
    pub fn new(config: EntrezConfig) -> Result<Self, RemoteError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| RemoteError::Http { query: String::new(), message: e.to_string() })?;
        Ok(EntrezClient { config, http, last_request: Mutex::new(None), cache_lock: Mutex::new(()) })
    }

    pub fn config(&self) -> &EntrezConfig {
        &self.config
    }

    fn cache_path(&self, query: &str, date_limit: Option<NaiveDate>) -> Option<PathBuf> {
        self.config.cache_dir.as_ref().map(|d| d.join(format!("{}.json", cache_key(query, date_limit))))
    }

    fn read_cache(&self, path: &Path) -> Option<BTreeSet<String>> {
        let _guard = self.cache_lock.lock().unwrap();
        let text = std::fs::read_to_string(path).ok()?;
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(e) => Some(e.ids),
            Err(e) => {
                log::warn!("ignoring unreadable cache file {}: {e}", path.display());
                None
            }
        }
    }

    fn write_cache(&self, path: &Path, entry: &CacheEntry) -> Result<(), RemoteError> {
        let _guard = self.cache_lock.lock().unwrap();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(entry).expect("cache entry serializes"))?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    fn throttle(&self) {
        let mut last = self.last_request.lock().unwrap();
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < self.config.min_interval {
                std::thread::sleep(self.config.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn fetch_page(&self, query: &str, date_limit: Option<NaiveDate>, start: usize) -> Result<Page, RemoteError> {
        let herr = |message: String| RemoteError::Http { query: query.to_string(), message };
        let mut url = reqwest::Url::parse(&format!("{}/esearch.fcgi", self.config.base_url.trim_end_matches('/')))
            .map_err(|e| herr(e.to_string()))?;
        {
            let mut q = url.query_pairs_mut();
            q.append_pair("db", "pubmed")
                .append_pair("term", query)
                .append_pair("retstart", &start.to_string())
                .append_pair("retmax", &self.config.page_size.to_string());
            if let Some(d) = date_limit {
                q.append_pair("datetype", "pdat")
                    .append_pair("mindate", "1800/01/01")
                    .append_pair("maxdate", &d.format("%Y/%m/%d").to_string());
            }
            if let Some(k) = &self.config.api_key {
                q.append_pair("api_key", k);
            }
        }

        let mut attempt = 0;
        loop {
            self.throttle();
            let result = self.http.get(url.clone()).send();
            let retryable = match result {
                Ok(resp) if resp.status().is_success() => {
                    let body = resp.text().map_err(|e| herr(e.to_string()))?;
                    return parse_page(query, &body);
                }
                Ok(resp) => {
                    let status = resp.status();
                    if !(status.is_server_error() || status.as_u16() == 429) || attempt >= self.config.max_retries {
                        return Err(RemoteError::Status { query: query.to_string(), status: status.as_u16() });
                    }
                    format!("HTTP {status}")
                }
                Err(e) => {
                    if attempt >= self.config.max_retries {
                        return Err(herr(e.to_string()));
                    }
                    e.to_string()
                }
            };
            let delay = self.config.backoff * 2u32.pow(attempt);
            log::warn!("retrying {query:?} after {retryable} (attempt {})", attempt + 1);
            std::thread::sleep(delay);
            attempt += 1;
        }
    }

    /// All PMIDs the service returns for `query`, across pages.
    pub fn search(&self, query: &str, date_limit: Option<NaiveDate>) -> Result<BTreeSet<String>, RemoteError> {
        let cache = self.cache_path(query, date_limit);
        if let Some(ids) = cache.as_deref().and_then(|p| self.read_cache(p)) {
            return Ok(ids);
        }
        let mut ids = BTreeSet::new();
        let mut start = 0;
        loop {
            let page = self.fetch_page(query, date_limit, start)?;
            let n = page.ids.len();
            ids.extend(page.ids);
            start += n;
            if n == 0 || start >= page.count {
                break;
            }
        }
        if let Some(p) = cache {
            self.write_cache(&p, &CacheEntry { query: query.to_string(), date_limit, ids: ids.clone() })?;
        }
        Ok(ids)
    }
}
