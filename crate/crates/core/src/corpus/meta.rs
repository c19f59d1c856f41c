use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TokenCloud;

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("cannot read metadata {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("metadata line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("metadata has {records} records but the cloud has {tokens} tokens")]
    CountMismatch { records: usize, tokens: usize },
    #[error("metadata line {line}: token {token} out of range or repeated")]
    BadToken { line: usize, token: usize },
    #[error("episode {episode} repeats timestep {t}")]
    DuplicateStep { episode: i64, t: u64 },
}

/// Per-token trajectory annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenMeta {
    pub episode: i64,
    pub t: u64,
    #[serde(default)]
    pub events: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct MetaLine {
    token: usize,
    episode: i64,
    t: u64,
    #[serde(default)]
    events: Vec<String>,
    #[serde(default)]
    thumbnail: Option<String>,
}

/// Metadata aligned with token order plus an episode -> time-ordered tokens index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeIndex {
    records: Vec<TokenMeta>,
    episodes: BTreeMap<i64, Vec<usize>>,
}

impl EpisodeIndex {
    /// Validates per-token records (indexed by token) and builds the index.
    pub fn new(records: Vec<TokenMeta>) -> Result<Self, MetaError> {
        let mut episodes: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (token, m) in records.iter().enumerate() {
            episodes.entry(m.episode).or_default().push(token);
        }
        for (&episode, tokens) in episodes.iter_mut() {
            tokens.sort_by_key(|&k| records[k].t);
            if let Some(w) = tokens.windows(2).find(|w| records[w[0]].t == records[w[1]].t) {
                return Err(MetaError::DuplicateStep {
                    episode,
                    t: records[w[0]].t,
                });
            }
        }
        Ok(Self { records, episodes })
    }

    pub fn records(&self) -> &[TokenMeta] {
        &self.records
    }

    pub fn get(&self, token: usize) -> Option<&TokenMeta> {
        self.records.get(token)
    }

    /// Episodes in ascending id order, each with token indices sorted by timestep.
    pub fn episodes(&self) -> &BTreeMap<i64, Vec<usize>> {
        &self.episodes
    }
}

/// Parses line-delimited metadata for a cloud of `n_tokens` tokens.
pub fn parse_meta<R: BufRead>(input: R, n_tokens: usize) -> Result<EpisodeIndex, MetaError> {
    let mut slots: Vec<Option<TokenMeta>> = vec![None; n_tokens];
    let mut count = 0;
    for (k, line) in input.lines().enumerate() {
        let line_no = k + 1;
        let line = line.map_err(|e| MetaError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MetaLine = serde_json::from_str(&line).map_err(|e| MetaError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        count += 1;
        if count > n_tokens {
            continue;
        }
        let slot = slots.get_mut(rec.token).filter(|s| s.is_none()).ok_or(
            MetaError::BadToken {
                line: line_no,
                token: rec.token,
            },
        )?;
        *slot = Some(TokenMeta {
            episode: rec.episode,
            t: rec.t,
            events: rec.events.into_iter().collect(),
            thumbnail: rec.thumbnail.map(PathBuf::from),
        });
    }
    if count != n_tokens {
        return Err(MetaError::CountMismatch {
            records: count,
            tokens: n_tokens,
        });
    }
    EpisodeIndex::new(slots.into_iter().map(|s| s.expect("all slots filled")).collect())
}

/// Reads a metadata file and returns the cloud with its episode index attached.
pub fn attach_meta(cloud: TokenCloud, meta_path: impl AsRef<Path>) -> Result<TokenCloud, MetaError> {
    let path = meta_path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| MetaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let index = parse_meta(std::io::BufReader::new(file), cloud.len())?;
    Ok(cloud.with_index(index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_tokens_one_episode() {
        let text = "{\"token\":1,\"episode\":0,\"t\":1,\"events\":[\"coin_collected\"]}\n{\"token\":0,\"episode\":0,\"t\":0}\n";
        let index = parse_meta(text.as_bytes(), 2).unwrap();
        assert_eq!(index.episodes()[&0], vec![0, 1]);
        assert!(index.get(1).unwrap().events.contains("coin_collected"));
    }

    #[test]
    fn count_mismatch() {
        let text = "{\"token\":0,\"episode\":0,\"t\":0}\n{\"token\":1,\"episode\":0,\"t\":1}\n{\"token\":1,\"episode\":0,\"t\":2}\n";
        assert!(matches!(
            parse_meta(text.as_bytes(), 2).unwrap_err(),
            MetaError::CountMismatch { records: 3, tokens: 2 }
        ));
    }

    #[test]
    fn duplicate_step() {
        let text = "{\"token\":0,\"episode\":4,\"t\":3}\n{\"token\":1,\"episode\":4,\"t\":3}\n";
        assert!(matches!(
            parse_meta(text.as_bytes(), 2).unwrap_err(),
            MetaError::DuplicateStep { episode: 4, t: 3 }
        ));
    }

    #[test]
    fn paper_scale_corpus() {
        // 250 episodes of 18 steps each.
        let mut text = String::new();
        let mut token = 0;
        for ep in 0..250 {
            for t in 0..18 {
                text.push_str(&format!("{{\"token\":{token},\"episode\":{ep},\"t\":{t}}}\n"));
                token += 1;
            }
        }
        let index = parse_meta(text.as_bytes(), 4500).unwrap();
        assert_eq!(index.episodes().len(), 250);
        assert_eq!(index.records().len(), 4500);
    }

    #[test]
    fn bad_json_line() {
        let err = parse_meta("{\"token\":0}\n".as_bytes(), 1).unwrap_err();
        assert!(matches!(err, MetaError::Parse { line: 1, .. }));
    }
}
