//! Page retrieval with a mandatory on-disk cache.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FetchError {
    /// Network trouble or an offline cache miss; trying again may succeed.
    #[error("retriable fetch failure for {url}: {reason}")]
    Retriable { url: String, reason: String },
    #[error("page missing: {0}")]
    Missing(String),
    #[error("page cache i/o error at {path}: {reason}")]
    Cache { path: PathBuf, reason: String },
}

impl FetchError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, FetchError::Retriable { .. })
    }
}

/// Anything that can produce raw page markup for a URL.
pub trait PageSource: Send + Sync {
    fn fetch(&self, url: &str) -> Result<String, FetchError>;
}

/// Fetches Wikipedia article wikitext over HTTP; `/wiki/Title` URLs are
/// rewritten to the raw-markup endpoint.
pub struct HttpSource {
    agent: ureq::Agent,
}

impl HttpSource {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .user_agent("typology-pipeline/0.1")
            .build()
            .into();
        HttpSource { agent }
    }

    pub fn raw_url(url: &str) -> String {
        match url.split_once("/wiki/") {
            Some((host, title)) if host.contains("wikipedia.org") && !title.is_empty() => {
                format!("{host}/w/index.php?title={title}&action=raw")
            }
            _ => url.to_string(),
        }
    }
}

impl Default for HttpSource {
    fn default() -> Self {
        HttpSource::new(Duration::from_secs(30))
    }
}

impl PageSource for HttpSource {
    fn fetch(&self, url: &str) -> Result<String, FetchError> {
        match self.agent.get(&Self::raw_url(url)).call() {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_string()
                .map_err(|e| FetchError::Retriable {
                    url: url.to_string(),
                    reason: e.to_string(),
                }),
            Err(ureq::Error::StatusCode(404)) | Err(ureq::Error::StatusCode(410)) => {
                Err(FetchError::Missing(url.to_string()))
            }
            Err(e) => Err(FetchError::Retriable {
                url: url.to_string(),
                reason: e.to_string(),
            }),
        }
    }
}

/// Reads `file://` URLs and plain filesystem paths.
#[derive(Debug, Default, Clone)]
pub struct LocalSource;

impl PageSource for LocalSource {
    fn fetch(&self, url: &str) -> Result<String, FetchError> {
        let path = url.strip_prefix("file://").unwrap_or(url);
        match fs::read_to_string(path) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(FetchError::Missing(url.to_string()))
            }
            Err(e) => Err(FetchError::Retriable {
                url: url.to_string(),
                reason: e.to_string(),
            }),
        }
    }
}

/// Dispatches on URL scheme: `http(s)://` goes to the network, the rest to disk.
pub struct SchemeSource {
    http: HttpSource,
    local: LocalSource,
}

impl SchemeSource {
    pub fn new(timeout: Duration) -> Self {
        SchemeSource {
            http: HttpSource::new(timeout),
            local: LocalSource,
        }
    }
}

impl PageSource for SchemeSource {
    fn fetch(&self, url: &str) -> Result<String, FetchError> {
        if url.starts_with("http://") || url.starts_with("https://") {
            self.http.fetch(url)
        } else {
            self.local.fetch(url)
        }
    }
}

/// In-memory pages; unknown URLs are missing.
#[derive(Debug, Default, Clone)]
pub struct MemorySource {
    pub pages: HashMap<String, String>,
}

impl PageSource for MemorySource {
    fn fetch(&self, url: &str) -> Result<String, FetchError> {
        self.pages
            .get(url)
            .cloned()
            .ok_or_else(|| FetchError::Missing(url.to_string()))
    }
}

/// Never reaches anything; every call is a retriable failure.
#[derive(Debug, Default, Clone)]
pub struct OfflineSource;

impl PageSource for OfflineSource {
    fn fetch(&self, url: &str) -> Result<String, FetchError> {
        Err(FetchError::Retriable {
            url: url.to_string(),
            reason: "network disabled".to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPage {
    pub url: String,
    pub markup: String,
    /// Seconds since the Unix epoch at fetch time.
    pub fetched_at: u64,
    pub from_cache: bool,
}

/// One file per city id holding fetch metadata followed by the raw markup.
pub struct PageCache {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl PageCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        PageCache {
            dir: dir.into(),
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, city_id: &str) -> PathBuf {
        self.dir.join(format!("{}.page", file_key(city_id)))
    }

    fn key_lock(&self, city_id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap();
        locks.entry(city_id.to_string()).or_default().clone()
    }

    /// Cached page for `city_id`, provided it was fetched from `url`.
    pub fn get(&self, city_id: &str, url: &str) -> Result<Option<RawPage>, FetchError> {
        let path = self.path_for(city_id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(cache_err(&path, e)),
        };
        let page = parse_cache_file(&text).ok_or_else(|| FetchError::Cache {
            path: path.clone(),
            reason: "malformed cache header".to_string(),
        })?;
        Ok((page.url == url).then_some(page))
    }

    /// Serve from cache, otherwise fetch from `source` and record the result.
    /// Failed fetches leave the cache untouched.
    pub fn fetch_page(
        &self,
        source: &dyn PageSource,
        city_id: &str,
        url: &str,
    ) -> Result<RawPage, FetchError> {
        let lock = self.key_lock(city_id);
        let _guard = lock.lock().unwrap();
        if let Some(page) = self.get(city_id, url)? {
            return Ok(page);
        }
        let markup = source.fetch(url)?;
        let fetched_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let page = RawPage {
            url: url.to_string(),
            markup,
            fetched_at,
            from_cache: false,
        };
        self.write(city_id, &page)?;
        Ok(page)
    }

    fn write(&self, city_id: &str, page: &RawPage) -> Result<(), FetchError> {
        fs::create_dir_all(&self.dir).map_err(|e| cache_err(&self.dir, e))?;
        let path = self.path_for(city_id);
        let tmp = path.with_extension("page.tmp");
        let digest = hex::encode(Sha256::digest(page.markup.as_bytes()));
        let mut f = fs::File::create(&tmp).map_err(|e| cache_err(&tmp, e))?;
        write!(
            f,
            "url: {}\nfetched_at: {}\nsha256: {}\n\n{}",
            page.url, page.fetched_at, digest, page.markup
        )
        .map_err(|e| cache_err(&tmp, e))?;
        f.sync_all().map_err(|e| cache_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| cache_err(&path, e))
    }
}

fn cache_err(path: &Path, e: std::io::Error) -> FetchError {
    FetchError::Cache {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn parse_cache_file(text: &str) -> Option<RawPage> {
    let (header, markup) = text.split_once("\n\n")?;
    let mut url = None;
    let mut fetched_at = None;
    let mut digest = None;
    for line in header.lines() {
        let (k, v) = line.split_once(": ")?;
        match k {
            "url" => url = Some(v.to_string()),
            "fetched_at" => fetched_at = v.parse().ok(),
            "sha256" => digest = Some(v.to_string()),
            _ => {}
        }
    }
    if digest? != hex::encode(Sha256::digest(markup.as_bytes())) {
        return None;
    }
    Some(RawPage {
        url: url?,
        markup: markup.to_string(),
        fetched_at: fetched_at?,
        from_cache: true,
    })
}

/// Filesystem-safe key for a city id; ids needing escapes get a hash suffix.
pub fn file_key(city_id: &str) -> String {
    let safe: String = city_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if safe == city_id && !safe.starts_with('.') {
        safe
    } else {
        let h = hex::encode(Sha256::digest(city_id.as_bytes()));
        format!("{}-{}", safe.trim_start_matches('.'), &h[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::extract_sentences;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        inner: MemorySource,
        calls: AtomicUsize,
    }

    impl PageSource for Counting {
        fn fetch(&self, url: &str) -> Result<String, FetchError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.fetch(url)
        }
    }

    fn source() -> Counting {
        let mut pages = HashMap::new();
        pages.insert(
            "https://en.wikipedia.org/wiki/Testville".to_string(),
            "Testville is busy. Traffic is heavy[1].\n\n== History ==\nIt grew.".to_string(),
        );
        Counting {
            inner: MemorySource { pages },
            calls: AtomicUsize::new(0),
        }
    }

    #[test]
    fn second_fetch_served_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PageCache::new(dir.path());
        let src = source();
        let url = "https://en.wikipedia.org/wiki/Testville";
        let first = cache.fetch_page(&src, "testville", url).unwrap();
        assert!(!first.from_cache);
        let second = cache.fetch_page(&src, "testville", url).unwrap();
        assert!(second.from_cache);
        assert_eq!(src.calls.load(Ordering::SeqCst), 1);
        assert_eq!(first.markup, second.markup);
    }

    #[test]
    fn offline_cache_matches_fresh_parse() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PageCache::new(dir.path());
        let url = "https://en.wikipedia.org/wiki/Testville";
        let fresh = cache.fetch_page(&source(), "testville", url).unwrap();
        let cached = cache.fetch_page(&OfflineSource, "testville", url).unwrap();
        assert_eq!(fresh.markup.as_bytes(), cached.markup.as_bytes());
        assert_eq!(
            extract_sentences(&fresh.markup).unwrap(),
            extract_sentences(&cached.markup).unwrap()
        );
    }

    #[test]
    fn missing_page_is_permanent_and_leaves_cache_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PageCache::new(dir.path());
        let err = cache
            .fetch_page(&source(), "nowhere", "https://en.wikipedia.org/wiki/Nowhere")
            .unwrap_err();
        assert!(matches!(err, FetchError::Missing(_)));
        assert!(!err.is_retriable());
        assert!(!cache.path_for("nowhere").exists());

        let err = cache
            .fetch_page(&OfflineSource, "nowhere", "https://en.wikipedia.org/wiki/Nowhere")
            .unwrap_err();
        assert!(err.is_retriable());
        assert!(!cache.path_for("nowhere").exists());
    }

    #[test]
    fn url_change_invalidates_entry() {
        let dir = tempfile::tempdir().unwrap();
        let cache = PageCache::new(dir.path());
        let url = "https://en.wikipedia.org/wiki/Testville";
        cache.fetch_page(&source(), "testville", url).unwrap();
        assert!(cache.get("testville", url).unwrap().is_some());
        assert!(cache.get("testville", "https://other").unwrap().is_none());
    }

    #[test]
    fn raw_url_rewrite() {
        assert_eq!(
            HttpSource::raw_url("https://en.wikipedia.org/wiki/New_York_City"),
            "https://en.wikipedia.org/w/index.php?title=New_York_City&action=raw"
        );
        assert_eq!(HttpSource::raw_url("https://x.org/a"), "https://x.org/a");
    }

    #[test]
    fn file_keys_are_safe() {
        assert_eq!(file_key("new_york-1"), "new_york-1");
        let k = file_key("São Paulo/../x");
        assert!(!k.contains('/'));
        assert_ne!(file_key("a b"), file_key("a_b"));
    }
}
