use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MetricError;

/// Binary correctness judgments for one generated answer. Votes are
/// written as 0/1; `true`/`false` are accepted on input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub item_id: String,
    #[serde(serialize_with = "votes_out", deserialize_with = "votes_in")]
    pub votes: Vec<bool>,
}

fn votes_out<S: Serializer>(votes: &[bool], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(votes.iter().map(|&v| v as u8))
}

fn votes_in<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Vote {
        Bool(bool),
        Int(u64),
    }
    Vec::<Vote>::deserialize(d)?
        .into_iter()
        .map(|v| match v {
            Vote::Bool(b) => Ok(b),
            Vote::Int(0) => Ok(false),
            Vote::Int(1) => Ok(true),
            Vote::Int(n) => Err(serde::de::Error::custom(format!("vote must be 0 or 1, got {n}"))),
        })
        .collect()
}

impl VoteRecord {
    pub fn new(item_id: impl Into<String>, votes: Vec<bool>) -> Self {
        VoteRecord {
            item_id: item_id.into(),
            votes,
        }
    }

    fn positives(&self) -> usize {
        self.votes.iter().filter(|&&v| v).count()
    }
}

/// Positive votes over all votes, pooled across items.
pub fn vote_accuracy(records: &[VoteRecord]) -> Result<f64, MetricError> {
    if records.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut positive = 0usize;
    let mut total = 0usize;
    for r in records {
        if r.votes.is_empty() {
            return Err(MetricError::NoVotes(r.item_id.clone()));
        }
        positive += r.positives();
        total += r.votes.len();
    }
    Ok(positive as f64 / total as f64)
}

/// Fleiss' kappa over binary votes with a fixed number of raters per item.
///
/// When every vote falls in one category the expected agreement is 1 and
/// the ratio is undefined; that case returns 1.0.
pub fn fleiss_kappa(records: &[VoteRecord]) -> Result<f64, MetricError> {
    if records.len() < 2 {
        return Err(MetricError::TooFew("2 items"));
    }
    let raters = records[0].votes.len();
    if raters < 2 {
        return Err(MetricError::TooFew("2 raters per item"));
    }
    if let Some(r) = records.iter().find(|r| r.votes.len() != raters) {
        return Err(MetricError::UnequalRaters {
            first: raters,
            other: r.votes.len(),
            item: r.item_id.clone(),
        });
    }

    let n = raters as f64;
    let items = records.len() as f64;
    let mut category_totals = [0.0f64; 2];
    let mut agreement_sum = 0.0;
    for r in records {
        let pos = r.positives() as f64;
        let counts = [pos, n - pos];
        category_totals[0] += counts[0];
        category_totals[1] += counts[1];
        let same_pairs: f64 = counts.iter().map(|c| c * (c - 1.0)).sum();
        agreement_sum += same_pairs / (n * (n - 1.0));
    }
    let p_bar = agreement_sum / items;
    let p_e: f64 = category_totals
        .iter()
        .map(|t| {
            let p = t / (items * n);
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, pos: usize, neg: usize) -> VoteRecord {
        let mut votes = vec![true; pos];
        votes.extend(vec![false; neg]);
        VoteRecord::new(id, votes)
    }

    #[test]
    fn accuracy_is_micro_averaged() {
        assert_eq!(vote_accuracy(&[rec("a", 3, 0), rec("b", 2, 0)]).unwrap(), 1.0);
        let seven_of_nine = [rec("a", 3, 0), rec("b", 2, 1), rec("c", 2, 1)];
        assert!((vote_accuracy(&seven_of_nine).unwrap() - 7.0 / 9.0).abs() < 1e-15);
        // per-item majority would give 0.5 here
        assert_eq!(vote_accuracy(&[rec("a", 1, 2), rec("b", 5, 0)]).unwrap(), 0.75);
        assert_eq!(vote_accuracy(&[]), Err(MetricError::Empty));
        assert!(matches!(vote_accuracy(&[rec("z", 0, 0)]), Err(MetricError::NoVotes(_))));
    }

    #[test]
    fn kappa_hand_cases() {
        assert_eq!(fleiss_kappa(&[rec("a", 3, 0), rec("b", 0, 3)]).unwrap(), 1.0);
        assert_eq!(fleiss_kappa(&[rec("a", 3, 0), rec("b", 3, 0)]).unwrap(), 1.0);
        // cross-checked against statsmodels.stats.inter_rater.fleiss_kappa
        let mixed = [rec("a", 2, 1), rec("b", 0, 3), rec("c", 3, 0), rec("d", 1, 2)];
        assert!((fleiss_kappa(&mixed).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_errors() {
        assert!(matches!(fleiss_kappa(&[rec("a", 3, 0)]), Err(MetricError::TooFew(_))));
        assert!(matches!(
            fleiss_kappa(&[rec("a", 3, 0), rec("b", 2, 0)]),
            Err(MetricError::UnequalRaters { item, .. }) if item == "b"
        ));
        assert!(matches!(fleiss_kappa(&[rec("a", 1, 0), rec("b", 0, 1)]), Err(MetricError::TooFew(_))));
    }

    proptest! {
        #[test]
        fn unanimous_tables_give_one(raters in 2usize..8, cats in proptest::collection::vec(any::<bool>(), 2..40)) {
            let records: Vec<_> = cats
                .iter()
                .enumerate()
                .map(|(i, &c)| VoteRecord::new(i.to_string(), vec![c; raters]))
                .collect();
            prop_assert_eq!(fleiss_kappa(&records).unwrap(), 1.0);
        }

        #[test]
        fn kappa_in_range(raters in 2usize..6, pos in proptest::collection::vec(0usize..6, 2..30)) {
            let records: Vec<_> = pos
                .iter()
                .enumerate()
                .map(|(i, &p)| rec(&i.to_string(), p.min(raters), raters - p.min(raters)))
                .collect();
            let k = fleiss_kappa(&records).unwrap();
            prop_assert!((-1.0..=1.0).contains(&k), "{}", k);
        }

        #[test]
        fn accuracy_permutation_invariant(votes in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 1..6), 1..20)) {
            let records: Vec<_> = votes.iter().enumerate().map(|(i, v)| VoteRecord::new(i.to_string(), v.clone())).collect();
            let mut shuffled: Vec<_> = records.iter().rev().cloned().collect();
            for r in &mut shuffled {
                r.votes.reverse();
            }
            prop_assert_eq!(vote_accuracy(&records).unwrap(), vote_accuracy(&shuffled).unwrap());
        }
    }

    #[test]
    fn vote_file_format() {
        let r: VoteRecord = serde_json::from_str(r#"{"item_id":"a","votes":[1,0,1]}"#).unwrap();
        assert_eq!(r.votes, [true, false, true]);
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"item_id":"a","votes":[1,0,1]}"#);
        let r: VoteRecord = serde_json::from_str(r#"{"item_id":"a","votes":[true,false]}"#).unwrap();
        assert_eq!(r.votes, [true, false]);
        assert!(serde_json::from_str::<VoteRecord>(r#"{"item_id":"a","votes":[2]}"#).is_err());
    }
}
