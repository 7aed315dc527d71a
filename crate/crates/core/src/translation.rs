//! EDU-level translation: every EDU is translated on its own so the
//! segmentation, EDU order and tree annotations carry over unchanged.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::treebank::{Document, Record, WhitespaceTokenizer};

pub trait TranslationClient: Send + Sync {
    /// Stable name used in cache keys.
    fn id(&self) -> &str;

    /// Translates `texts` in order; must return exactly one output per input.
    fn translate_batch(&self, texts: &[String], source: &str, target: &str) -> Result<Vec<String>>;
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityClient;

impl TranslationClient for IdentityClient {
    fn id(&self) -> &str {
        "identity"
    }

    fn translate_batch(&self, texts: &[String], _source: &str, _target: &str) -> Result<Vec<String>> {
        Ok(texts.to_vec())
    }
}

/// Word-by-word substitution from a fixed dictionary; unknown words pass
/// through. Matching ignores case and surrounding punctuation, and a
/// capitalized source word yields a capitalized replacement.
#[derive(Debug, Clone)]
pub struct DictionaryClient {
    id: String,
    entries: HashMap<String, String>,
}

impl DictionaryClient {
    pub fn new(id: impl Into<String>, entries: impl IntoIterator<Item = (String, String)>) -> Self {
        DictionaryClient {
            id: id.into(),
            entries: entries.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect(),
        }
    }

    /// Reads `source<TAB>target` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('\t').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected source<TAB>target", path.display(), n + 1))
            })?;
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Self::new(format!("dictionary:{}", path.display()), entries))
    }

    fn word(&self, w: &str) -> String {
        let start = w.find(|c: char| c.is_alphanumeric());
        let end = w.rfind(|c: char| c.is_alphanumeric());
        let (Some(s), Some(e)) = (start, end) else {
            return w.to_string();
        };
        let e = e + w[e..].chars().next().map_or(1, char::len_utf8);
        let core = &w[s..e];
        match self.entries.get(&core.to_lowercase()) {
            Some(rep) => {
                let rep = if core.chars().next().is_some_and(char::is_uppercase) {
                    let mut c = rep.chars();
                    c.next()
                        .map(|f| f.to_uppercase().chain(c).collect())
                        .unwrap_or_default()
                } else {
                    rep.clone()
                };
                format!("{}{}{}", &w[..s], rep, &w[e..])
            }
            None => w.to_string(),
        }
    }
}

impl TranslationClient for DictionaryClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate_batch(&self, texts: &[String], _source: &str, _target: &str) -> Result<Vec<String>> {
        Ok(texts
            .iter()
            .map(|t| t.split_whitespace().map(|w| self.word(w)).collect::<Vec<_>>().join(" "))
            .collect())
    }
}

/// Token bucket limiting request rate.
#[derive(Debug)]
struct TokenBucket {
    capacity: f64,
    per_sec: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    fn new(per_sec: f64, capacity: f64) -> Self {
        TokenBucket {
            capacity,
            per_sec,
            tokens: capacity,
            last: Instant::now(),
        }
    }

    /// Time to wait before a token is available; takes it if none.
    fn take(&mut self) -> Option<Duration> {
        let now = Instant::now();
        self.tokens = (self.tokens + now.duration_since(self.last).as_secs_f64() * self.per_sec).min(self.capacity);
        self.last = now;
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            None
        } else {
            Some(Duration::from_secs_f64((1.0 - self.tokens) / self.per_sec))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalConfig {
    pub endpoint: String,
    /// Environment variable holding the API key, if any.
    pub api_key_env: String,
    pub attempts: u32,
    pub backoff: Duration,
    pub requests_per_sec: f64,
    pub burst: f64,
    pub timeout: Duration,
}

pub const ENDPOINT_ENV: &str = "RSTPARSE_TRANSLATE_ENDPOINT";
pub const API_KEY_ENV: &str = "RSTPARSE_TRANSLATE_API_KEY";

impl ExternalConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        ExternalConfig {
            endpoint: endpoint.into(),
            api_key_env: API_KEY_ENV.to_string(),
            attempts: 3,
            backoff: Duration::from_millis(500),
            requests_per_sec: 5.0,
            burst: 5.0,
            timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Serialize)]
struct ServiceRequest<'a> {
    q: &'a str,
    source: &'a str,
    target: &'a str,
    format: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    api_key: Option<&'a str>,
}

#[derive(Deserialize)]
struct ServiceResponse {
    #[serde(rename = "translatedText")]
    translated_text: String,
}

/// HTTP adapter for a LibreTranslate-style JSON endpoint. A document's EDUs
/// are sent as one newline-separated text and the reply is split on
/// newlines again.
pub struct ExternalClient {
    id: String,
    cfg: ExternalConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    bucket: Mutex<TokenBucket>,
}

impl ExternalClient {
    pub fn new(cfg: ExternalConfig) -> Self {
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        ExternalClient {
            id: format!("external:{}", cfg.endpoint),
            bucket: Mutex::new(TokenBucket::new(cfg.requests_per_sec, cfg.burst.max(1.0))),
            cfg,
            api_key,
            agent,
        }
    }

    /// Endpoint from [`ENDPOINT_ENV`].
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .map_err(|_| Error::Config(format!("the external client needs {ENDPOINT_ENV}")))?;
        Ok(Self::new(ExternalConfig::new(endpoint)))
    }

    fn wait_for_token(&self) {
        loop {
            let wait = self.bucket.lock().expect("rate limiter poisoned").take();
            match wait {
                None => return,
                Some(d) => std::thread::sleep(d),
            }
        }
    }

    fn attempt(&self, text: &str, source: &str, target: &str) -> std::result::Result<String, (bool, String)> {
        self.wait_for_token();
        let body = ServiceRequest {
            q: text,
            source,
            target,
            format: "text",
            api_key: self.api_key.as_deref(),
        };
        let mut resp = self
            .agent
            .post(&self.cfg.endpoint)
            .send_json(&body)
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let retry = status == 429 || status >= 500;
            return Err((retry, format!("HTTP {status}")));
        }
        let parsed: ServiceResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| (false, format!("bad response body: {e}")))?;
        Ok(parsed.translated_text)
    }
}

impl TranslationClient for ExternalClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn translate_batch(&self, texts: &[String], source: &str, target: &str) -> Result<Vec<String>> {
        if let Some(bad) = texts.iter().find(|t| t.contains('\n')) {
            return Err(Error::Client(format!("segment contains a newline: {bad:?}")));
        }
        let joined = texts.join("\n");
        let mut delay = self.cfg.backoff;
        let mut last = String::new();
        for attempt in 1..=self.cfg.attempts.max(1) {
            match self.attempt(&joined, source, target) {
                Ok(out) => return Ok(out.split('\n').map(str::to_string).collect()),
                Err((retry, msg)) => {
                    warn!("translation attempt {attempt} failed: {msg}");
                    last = msg;
                    if !retry {
                        break;
                    }
                    if attempt < self.cfg.attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(Error::Client(format!("{}: {last}", self.cfg.endpoint)))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    client: String,
    source: String,
    target: String,
    translation: String,
}

/// Persistent translation memo. Entries are appended to a JSON-lines file;
/// reads and writes may happen from several threads.
#[derive(Debug)]
pub struct TranslationCache {
    path: Option<PathBuf>,
    map: RwLock<HashMap<String, String>>,
    file: Mutex<Option<File>>,
}

impl TranslationCache {
    pub fn in_memory() -> Self {
        TranslationCache {
            path: None,
            map: RwLock::new(HashMap::new()),
            file: Mutex::new(None),
        }
    }

    /// Opens (or creates) a cache file. Malformed lines are skipped.
    pub fn open(path: &Path) -> Result<Self> {
        let mut map = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(c) => {
                        map.insert(c.key, c.translation);
                    }
                    Err(e) if !line.trim().is_empty() => {
                        warn!("{}:{}: skipping cache line: {e}", path.display(), n + 1)
                    }
                    Err(_) => {}
                }
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(TranslationCache {
            path: Some(path.to_path_buf()),
            map: RwLock::new(map),
            file: Mutex::new(Some(file)),
        })
    }

    pub fn key(client: &str, source: &str, target: &str, text: &str) -> String {
        let text_hash = hex::encode(Sha256::digest(text.as_bytes()));
        let mut h = Sha256::new();
        for part in [client, source, target, &text_hash] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.map.read().expect("cache lock poisoned").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn put(&self, key: String, client: &str, source: &str, target: &str, translation: &str) -> Result<()> {
        let mut map = self.map.write().expect("cache lock poisoned");
        if map.contains_key(&key) {
            return Ok(());
        }
        if let Some(f) = self.file.lock().expect("cache file lock poisoned").as_mut() {
            let line = serde_json::to_string(&CacheLine {
                key: key.clone(),
                client: client.to_string(),
                source: source.to_string(),
                target: target.to_string(),
                translation: translation.to_string(),
            })?;
            let path = self.path.clone().unwrap_or_default();
            writeln!(f, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        map.insert(key, translation.to_string());
        Ok(())
    }
}

/// Translates one document's EDUs and re-attaches its original tree. At
/// most one client call is made, covering the EDUs missing from the cache.
pub fn translate_document(
    record: &Record,
    target: &str,
    client: &dyn TranslationClient,
    cache: &TranslationCache,
) -> Result<Record> {
    let doc = &record.doc;
    let source = doc.lang.as_str();
    let texts = doc.edu_texts();
    let keys: Vec<String> = texts
        .iter()
        .map(|t| TranslationCache::key(client.id(), source, target, t))
        .collect();
    let mut out: Vec<Option<String>> = keys.iter().map(|k| cache.get(k)).collect();

    let mut missing: Vec<usize> = Vec::new();
    let mut seen: HashMap<&str, ()> = HashMap::new();
    for (i, t) in texts.iter().enumerate() {
        if out[i].is_none() && seen.insert(t.as_str(), ()).is_none() {
            missing.push(i);
        }
    }
    if !missing.is_empty() {
        let batch: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
        debug!("{}: translating {} EDUs", doc.doc_id, batch.len());
        let translated = client.translate_batch(&batch, source, target)?;
        if translated.len() != batch.len() {
            return Err(Error::Segmentation {
                doc_id: doc.doc_id.clone(),
                message: format!("sent {} segments, received {}", batch.len(), translated.len()),
            });
        }
        if let Some(pos) = translated.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::Segmentation {
                doc_id: doc.doc_id.clone(),
                message: format!("EDU {} translated to empty text", missing[pos] + 1),
            });
        }
        for (&i, t) in missing.iter().zip(&translated) {
            cache.put(keys[i].clone(), client.id(), source, target, t)?;
        }
        // Duplicate EDU texts share a key, so every gap is now cached.
        for (slot, key) in out.iter_mut().zip(&keys) {
            if slot.is_none() {
                *slot = cache.get(key);
            }
        }
    }
    let edus: Vec<String> = out.into_iter().map(|t| t.expect("every EDU translated")).collect();
    if doc.tokenizer != "whitespace" {
        warn!("{}: tokenizer {:?} unavailable, re-tokenizing on whitespace", doc.doc_id, doc.tokenizer);
    }
    let translated = Document::from_edus(
        doc.doc_id.clone(),
        target,
        &edus,
        doc.source_treebank.clone(),
        &WhitespaceTokenizer,
    )
    .map_err(|e| Error::Segmentation {
        doc_id: doc.doc_id.clone(),
        message: e.to_string(),
    })?;
    Ok(Record::new(translated, record.tree.clone()))
}

#[derive(Debug)]
pub struct CorpusTranslation {
    pub records: Vec<Record>,
    /// `(doc_id, error)` for every document that could not be translated.
    pub failures: Vec<(String, Error)>,
}

/// Translates every document with up to `parallelism` concurrent requests.
/// Failed documents are dropped from the output and listed.
pub fn translate_corpus(
    corpus: &[Record],
    target: &str,
    client: &dyn TranslationClient,
    cache: &TranslationCache,
    parallelism: usize,
) -> Result<CorpusTranslation> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<Record>> = pool.install(|| {
        corpus
            .par_iter()
            .map(|r| translate_document(r, target, client, cache))
            .collect()
    });
    let mut records = Vec::with_capacity(corpus.len());
    let mut failures = Vec::new();
    for (r, res) in corpus.iter().zip(results) {
        match res {
            Ok(t) => records.push(t),
            Err(e) => {
                warn!("{}: {e}", r.doc.doc_id);
                failures.push((r.doc.doc_id.clone(), e));
            }
        }
    }
    Ok(CorpusTranslation { records, failures })
}

/// Builds a client from its CLI name: `identity`, `dictionary:<path>` or
/// `external` (endpoint from the environment).
pub fn client_by_name(name: &str) -> Result<Box<dyn TranslationClient>> {
    match name {
        "identity" => Ok(Box::new(IdentityClient)),
        "external" => Ok(Box::new(ExternalClient::from_env()?)),
        other => match other.strip_prefix("dictionary:") {
            Some(path) => Ok(Box::new(DictionaryClient::load(Path::new(path))?)),
            None => Err(Error::Config(format!("unknown translation client {other:?}"))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dictionary_keeps_case_and_punctuation() {
        let c = DictionaryClient::new("d", [("porém".to_string(), "however".to_string())]);
        let out = c
            .translate_batch(&["Porém, o mercado caiu".to_string()], "pt", "en")
            .unwrap();
        assert_eq!(out, vec!["However, o mercado caiu"]);
    }

    #[test]
    fn cache_keys_differ_by_every_component() {
        let base = TranslationCache::key("c", "pt", "en", "olá");
        assert_ne!(base, TranslationCache::key("d", "pt", "en", "olá"));
        assert_ne!(base, TranslationCache::key("c", "es", "en", "olá"));
        assert_ne!(base, TranslationCache::key("c", "pt", "de", "olá"));
        assert_ne!(base, TranslationCache::key("c", "pt", "en", "ola"));
        assert_eq!(base.len(), 64);
    }

    #[test]
    fn token_bucket_limits() {
        let mut b = TokenBucket::new(1.0, 2.0);
        assert!(b.take().is_none());
        assert!(b.take().is_none());
        assert!(b.take().is_some());
    }
}
