use std::collections::HashMap;
use std::path::Path;

use super::PolicyError;

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const REAL: &str = "real";
pub const FAKE: &str = "fake";

const DEFAULT_WORDS: [&str; 60] = [
    "the", "image", "is", "appears", "shows", "natural", "authentic", "photograph", "camera", "sensor",
    "noise", "texture", "edges", "anatomy", "lighting", "shadows", "consistent", "inconsistent", "smooth", "sharp",
    "blurry", "grid", "pattern", "upsampling", "artifacts", "periodic", "pixel", "blocks", "color", "cast",
    "tint", "warm", "bright", "dark", "scene", "details", "fine", "grain", "uniform", "plausible",
    "implausible", "geometry", "perspective", "physics", "face", "body", "text", "logos", "hands", "clear",
    "no", "visible", "with", "and", "of", "a", "generated", "synthetic", "because", "strong",
];

/// Ordered token list with an index ↔ token bijection. The reserved tokens
/// `<bos>`, `<eos>`, `real` and `fake` are always present.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    bos: usize,
    eos: usize,
    real: usize,
    fake: usize,
}

impl Default for Vocabulary {
    /// 64 tokens: the four reserved ones followed by explanation words.
    fn default() -> Self {
        let tokens = [BOS, EOS, REAL, FAKE].into_iter().chain(DEFAULT_WORDS).map(String::from).collect();
        Self::new(tokens).expect("default vocabulary is valid")
    }
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self, PolicyError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(PolicyError::Vocabulary(format!("token {t:?} is empty or contains whitespace")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(PolicyError::Vocabulary(format!("duplicate token {t:?}")));
            }
        }
        let find = |t: &str| {
            index.get(t).copied().ok_or_else(|| PolicyError::Vocabulary(format!("reserved token {t} missing")))
        };
        let (bos, eos, real, fake) = (find(BOS)?, find(EOS)?, find(REAL)?, find(FAKE)?);
        Ok(Self { tokens, index, bos, eos, real, fake })
    }

    /// One token per line.
    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let text = std::fs::read_to_string(path).map_err(|e| PolicyError::Io(path.display().to_string(), e))?;
        Self::new(text.lines().filter(|l| !l.trim().is_empty()).map(|l| l.trim().to_string()).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| PolicyError::Io(path.display().to_string(), e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn bos(&self) -> usize {
        self.bos
    }

    pub fn eos(&self) -> usize {
        self.eos
    }

    pub fn real(&self) -> usize {
        self.real
    }

    pub fn fake(&self) -> usize {
        self.fake
    }

    pub fn token(&self, i: usize) -> Option<&str> {
        self.tokens.get(i).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Whitespace split, lowercased, wrapped in `<bos> … <eos>`.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>, PolicyError> {
        let mut out = vec![self.bos];
        for word in text.split_whitespace() {
            let w = word.to_lowercase();
            out.push(self.id(&w).ok_or(PolicyError::UnknownWord(w))?);
        }
        out.push(self.eos);
        Ok(out)
    }

    /// Joins tokens with spaces, dropping `<bos>`/`<eos>`.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i != self.bos && i != self.eos)
            .filter_map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
