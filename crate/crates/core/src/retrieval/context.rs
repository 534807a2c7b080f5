//! Formatting retrieved passages into a budgeted context block.

use serde::{Deserialize, Serialize};

use super::{PassageStore, SearchHit};
use crate::error::Result;

/// Retrieved passages rendered as `[title] body` lines.
///
/// Budget units are whitespace-delimited tokens. Passages are re-joined with
/// single spaces, so the token count is exact.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContextBlock {
    pub text: String,
    pub token_count: usize,
    pub truncated: bool,
}

/// Whitespace token count used for every budget in this crate.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn format_context(
    hits: &[SearchHit],
    passages: &PassageStore,
    budget: usize,
) -> Result<ContextBlock> {
    let mut lines: Vec<String> = Vec::with_capacity(hits.len());
    let mut used = 0;
    let mut truncated = false;
    for hit in hits {
        let passage = passages.get(hit.id)?;
        let header = format!("[{}]", passage.title);
        let tokens: Vec<&str> = header
            .split_whitespace()
            .chain(passage.body.split_whitespace())
            .collect();
        let remaining = budget - used;
        if remaining == 0 {
            truncated = true;
            break;
        }
        if tokens.len() > remaining {
            lines.push(tokens[..remaining].join(" "));
            used += remaining;
            truncated = true;
            break;
        }
        used += tokens.len();
        lines.push(tokens.join(" "));
    }
    Ok(ContextBlock {
        text: lines.join("\n"),
        token_count: used,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::retrieval::PassageRecord;

    fn store() -> PassageStore {
        PassageStore::new(vec![
            PassageRecord {
                id: 1,
                title: "Paris".into(),
                body: "capital of France".into(),
            },
            PassageRecord {
                id: 2,
                title: "Lyon".into(),
                body: "a  city\tin France on the Rhone".into(),
            },
        ])
        .unwrap()
    }

    fn hit(id: u64) -> SearchHit {
        SearchHit { id, score: 1.0 }
    }

    #[test]
    fn single_passage_fits() {
        let block = format_context(&[hit(1)], &store(), 100).unwrap();
        assert_eq!(block.text, "[Paris] capital of France");
        assert_eq!(block.token_count, 4);
        assert_eq!(count_tokens(&block.text), 4);
        assert!(!block.truncated);
    }

    #[test]
    fn zero_budget() {
        let block = format_context(&[hit(1)], &store(), 0).unwrap();
        assert_eq!(block, ContextBlock { text: String::new(), token_count: 0, truncated: true });
        let none = format_context(&[], &store(), 0).unwrap();
        assert!(!none.truncated);
    }

    #[test]
    fn second_passage_cut_at_budget() {
        // 4 tokens for Paris, then 3 of Lyon's 8
        let block = format_context(&[hit(1), hit(2)], &store(), 7).unwrap();
        assert_eq!(block.text, "[Paris] capital of France\n[Lyon] a city");
        assert_eq!(block.token_count, 7);
        assert!(block.truncated);
        assert_eq!(count_tokens(&block.text), 7);
    }

    #[test]
    fn exact_fit_is_not_truncated() {
        let block = format_context(&[hit(1), hit(2)], &store(), 12).unwrap();
        assert_eq!(block.token_count, 12);
        assert!(!block.truncated);
    }

    #[test]
    fn unknown_id_is_integrity_error() {
        assert!(matches!(
            format_context(&[hit(9)], &store(), 10),
            Err(Error::DataIntegrity(_))
        ));
    }
}
