use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelRequest;

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model: &'a str,
    system_text: &'a str,
    user_text: &'a str,
    temperature: f64,
    max_tokens: u32,
}

/// Hex SHA-256 over the canonical JSON of the request and model name.
pub fn cache_key(request: &ModelRequest, model_name: &str) -> String {
    let material = KeyMaterial {
        model: model_name,
        system_text: &request.system_text,
        user_text: &request.user_text,
        temperature: request.temperature,
        max_tokens: request.max_tokens,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Serialize, Deserialize)]
struct Entry {
    model: String,
    request: ModelRequest,
    response: String,
}

/// Content-addressed response store: one `<sha256>.json` file per request.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, request: &ModelRequest, model_name: &str) -> Option<String> {
        let raw = fs::read(self.path_for(&cache_key(request, model_name))).ok()?;
        let entry: Entry = serde_json::from_slice(&raw).ok()?;
        // Guard against a hash match on different content.
        (entry.request == *request && entry.model == model_name).then_some(entry.response)
    }

    pub fn put(&self, request: &ModelRequest, model_name: &str, response: &str) -> std::io::Result<()> {
        let entry = Entry {
            model: model_name.to_string(),
            request: request.clone(),
            response: response.to_string(),
        };
        let bytes = serde_json::to_vec_pretty(&entry).expect("cache entry serializes");
        let path = self.path_for(&cache_key(request, model_name));
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn key_depends_on_every_field() {
        let base = ModelRequest::new("sys", "user");
        let k = cache_key(&base, "m");
        assert_ne!(k, cache_key(&base, "m2"));
        assert_ne!(k, cache_key(&ModelRequest::new("sys2", "user"), "m"));
        assert_ne!(k, cache_key(&ModelRequest::new("sys", "user2"), "m"));
        let mut t = base.clone();
        t.temperature = 0.5;
        assert_ne!(k, cache_key(&t, "m"));
        let mut t = base.clone();
        t.max_tokens = 10;
        assert_ne!(k, cache_key(&t, "m"));
        // Field boundaries are unambiguous.
        assert_ne!(
            cache_key(&ModelRequest::new("ab", "c"), "m"),
            cache_key(&ModelRequest::new("a", "bc"), "m")
        );
        assert_eq!(k, cache_key(&base, "m"));
    }

    #[test]
    fn no_collisions_over_random_prompts() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut prompts = HashSet::new();
        let mut keys = HashSet::new();
        while prompts.len() < 100_000 {
            let len = rng.random_range(1..24);
            let s: String = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
            if prompts.insert(s.clone()) {
                assert!(keys.insert(cache_key(&ModelRequest::new("sys", s), "m")));
            }
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let req = ModelRequest::new("s", "u");
        assert_eq!(cache.get(&req, "m"), None);
        cache.put(&req, "m", "Yes.\n  trailing ").unwrap();
        assert_eq!(cache.get(&req, "m").as_deref(), Some("Yes.\n  trailing "));
        assert_eq!(cache.get(&req, "other"), None);
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
    }
}
