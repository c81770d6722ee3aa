//! Evaluation stage: score a corpus with a trained model, then run the
//! intra-set, cross-set or leave-one-attack-type-out protocol over the
//! scores. Protocols work on dumped score records, so any report can be
//! recomputed offline from the JSON the CLI writes.

use serde::{Deserialize, Serialize};

use crate::decision::DecisionConfig;
use crate::error::{Error, Result};
use crate::evalkit::{self, EvalReport, LooOutcome, ScoredSample};
use crate::network::Model;
use crate::sample::{Sample, Split, TruthLabel};

use super::train::score_samples;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Intra,
    Cross,
    Loo,
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Protocol> {
        match s {
            "intra" => Ok(Protocol::Intra),
            "cross" => Ok(Protocol::Cross),
            "loo" => Ok(Protocol::Loo),
            other => Err(Error::invalid(format!("unknown protocol {other}"))),
        }
    }
}

/// One scored sample, with enough identity to audit or recompute a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub score: f64,
    pub truth: TruthLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack_type: Option<String>,
    pub split: Split,
}

impl ScoreRecord {
    pub fn to_scored(&self) -> Result<ScoredSample> {
        ScoredSample::new(self.score, self.truth, self.attack_type.clone(), self.split)
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum ProtocolOutcome {
    Single(EvalReport),
    Loo(LooOutcome),
}

impl ProtocolOutcome {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outcome serializes")
    }
}

/// Scores every sample in corpus order.
pub fn score_corpus(model: &Model, samples: &[Sample]) -> Result<Vec<ScoreRecord>> {
    let refs: Vec<&Sample> = samples.iter().collect();
    let scored = score_samples(model, &refs, &DecisionConfig::default())?;
    Ok(samples
        .iter()
        .zip(scored.into_iter())
        .map(|(sample, s)| ScoreRecord {
            id: sample.id.clone(),
            score: s.score,
            truth: s.truth,
            attack_type: s.attack_type,
            split: s.split,
        })
        .collect())
}

fn split_scores(records: &[ScoreRecord], split: Split) -> Result<Vec<ScoredSample>> {
    records
        .iter()
        .filter(|r| r.split == split)
        .map(|r| r.to_scored())
        .collect()
}

/// Runs a protocol over score records.
///
/// - `Intra`: operating point from the Dev split, report on the Test split.
/// - `Cross`: operating point from `source_dev` (the training corpus), report
///   plus HTER on this corpus's Test split.
/// - `Loo`: one fold per attack type over a fixed scorer; each fold drops the
///   held-out type from Train/Dev and restricts Test attacks to it.
pub fn evaluate_scores(
    records: &[ScoreRecord],
    protocol: Protocol,
    source_dev: Option<&[ScoreRecord]>,
) -> Result<ProtocolOutcome> {
    match protocol {
        Protocol::Intra => {
            let dev = split_scores(records, Split::Dev)?;
            let test = split_scores(records, Split::Test)?;
            Ok(ProtocolOutcome::Single(evalkit::intra_report(&dev, &test)?))
        }
        Protocol::Cross => {
            let source = source_dev.ok_or_else(|| {
                Error::invalid("cross protocol needs dev scores from the source corpus")
            })?;
            let dev = split_scores(source, Split::Dev)?;
            if dev.is_empty() {
                return Err(Error::invalid("source corpus has no dev split"));
            }
            let test = split_scores(records, Split::Test)?;
            Ok(ProtocolOutcome::Single(evalkit::cross_report(&dev, &test)?))
        }
        Protocol::Loo => {
            let mut types: Vec<String> = Vec::new();
            for r in records {
                if let Some(t) = &r.attack_type {
                    if !types.contains(t) {
                        types.push(t.clone());
                    }
                }
            }
            types.sort();
            let outcome = evalkit::run_loo_protocol(&types, |held| {
                records
                    .iter()
                    .filter(|r| match r.split {
                        Split::Train | Split::Dev => r.attack_type.as_deref() != Some(held),
                        Split::Test => match r.truth {
                            TruthLabel::BonaFide => true,
                            TruthLabel::Attack => r.attack_type.as_deref() == Some(held),
                        },
                    })
                    .map(|r| r.to_scored())
                    .collect()
            })?;
            Ok(ProtocolOutcome::Loo(outcome))
        }
    }
}

/// Scores the corpus and runs the protocol in one step, returning both the
/// records (for dumping) and the outcome.
pub fn evaluate_with_model(
    model: &Model,
    samples: &[Sample],
    protocol: Protocol,
    source_dev: Option<&[Sample]>,
) -> Result<(Vec<ScoreRecord>, ProtocolOutcome)> {
    let records = score_corpus(model, samples)?;
    let source_records = match source_dev {
        Some(src) => Some(score_corpus(model, src)?),
        None => None,
    };
    let outcome = evaluate_scores(&records, protocol, source_records.as_deref())?;
    Ok((records, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, score: f64, ty: Option<&str>, split: Split) -> ScoreRecord {
        ScoreRecord {
            id: id.to_string(),
            score,
            truth: if ty.is_some() { TruthLabel::Attack } else { TruthLabel::BonaFide },
            attack_type: ty.map(str::to_string),
            split,
        }
    }

    /// Bona scores low, attacks high, with a clean margin in every split.
    fn separable() -> Vec<ScoreRecord> {
        let mut records = Vec::new();
        let mut k = 0usize;
        for split in [Split::Train, Split::Dev, Split::Test] {
            for i in 0..4 {
                records.push(record(&format!("b{k}"), -0.8 + 0.01 * i as f64, None, split));
                records.push(record(&format!("p{k}"), 0.55 + 0.01 * i as f64, Some("print"), split));
                records.push(record(&format!("r{k}"), 0.35 + 0.01 * i as f64, Some("replay"), split));
                k += 1;
            }
        }
        records
    }

    #[test]
    fn separable_scores_give_zero_intra_acer() {
        let records = separable();
        match evaluate_scores(&records, Protocol::Intra, None).unwrap() {
            ProtocolOutcome::Single(report) => {
                assert_eq!(report.acer, 0.0);
                assert_eq!(report.apcer, 0.0);
                assert_eq!(report.bpcer, 0.0);
                assert_eq!(report.protocol, "intra");
            }
            other => panic!("expected a single report, got {other:?}"),
        }
    }

    #[test]
    fn cross_needs_and_uses_the_source_dev() {
        let target = separable();
        assert!(evaluate_scores(&target, Protocol::Cross, None).is_err());

        let source = separable();
        match evaluate_scores(&target, Protocol::Cross, Some(&source)).unwrap() {
            ProtocolOutcome::Single(report) => {
                assert_eq!(report.protocol, "cross");
                let hter = report.hter.unwrap();
                assert_eq!(hter, 0.0);
            }
            other => panic!("expected a single report, got {other:?}"),
        }
    }

    #[test]
    fn loo_produces_one_fold_per_type() {
        let records = separable();
        match evaluate_scores(&records, Protocol::Loo, None).unwrap() {
            ProtocolOutcome::Loo(outcome) => {
                assert_eq!(outcome.folds.len(), 2);
                let types: Vec<_> = outcome
                    .folds
                    .iter()
                    .map(|f| f.attack_type.clone().unwrap())
                    .collect();
                assert_eq!(types, vec!["print".to_string(), "replay".to_string()]);
                assert_eq!(outcome.mean, 0.0);
                assert_eq!(outcome.std, 0.0);
            }
            other => panic!("expected a loo outcome, got {other:?}"),
        }
    }

    #[test]
    fn reports_recompute_identically_from_dumped_records() {
        let records = separable();
        let outcome = evaluate_scores(&records, Protocol::Intra, None).unwrap();

        let json = serde_json::to_string(&records).unwrap();
        let parsed: Vec<ScoreRecord> = serde_json::from_str(&json).unwrap();
        let recomputed = evaluate_scores(&parsed, Protocol::Intra, None).unwrap();

        match (outcome, recomputed) {
            (ProtocolOutcome::Single(a), ProtocolOutcome::Single(b)) => {
                assert_eq!(a.threshold, b.threshold);
                assert_eq!(a.apcer, b.apcer);
                assert_eq!(a.bpcer, b.bpcer);
                assert_eq!(a.acer, b.acer);
                assert_eq!(a.per_type_apcer, b.per_type_apcer);
            }
            _ => panic!("protocol shape changed between runs"),
        }
    }

    #[test]
    fn imperfect_scores_produce_nonzero_rates() {
        let mut records = separable();
        // Push two test attacks below every bona score and two bona above.
        for r in records.iter_mut() {
            if r.split == Split::Test {
                match (&r.attack_type, r.id.as_str()) {
                    (Some(t), "p8") if t == "print" => r.score = -1.0,
                    (None, "b8") => r.score = 1.0,
                    _ => {}
                }
            }
        }
        match evaluate_scores(&records, Protocol::Intra, None).unwrap() {
            ProtocolOutcome::Single(report) => {
                assert!(report.acer > 0.0);
                assert!(report.apcer > 0.0 || report.bpcer > 0.0);
            }
            other => panic!("expected a single report, got {other:?}"),
        }
    }

    #[test]
    fn protocol_names_parse_and_reject() {
        assert_eq!("intra".parse::<Protocol>().unwrap(), Protocol::Intra);
        assert_eq!("cross".parse::<Protocol>().unwrap(), Protocol::Cross);
        assert_eq!("loo".parse::<Protocol>().unwrap(), Protocol::Loo);
        assert!("extra".parse::<Protocol>().is_err());
    }
}
