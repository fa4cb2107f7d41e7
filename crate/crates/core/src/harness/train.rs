use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate_subject, average_over_seeds, confusion, metrics, subject_prediction, MetricsReport, SeedAverage,
};
use crate::model::{Model, Sample};
use crate::tensor::{adam_step, AdamState, Graph, ParamStore, Rng};
use crate::types::Label;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Summed BCE over all training samples seen in each epoch.
    pub epoch_loss: Vec<f64>,
    /// Validation accuracy per epoch, when a validation split is used.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub val_accuracy: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
}

/// Subjects in first-appearance order.
fn subjects_in_order(samples: &[Sample]) -> Vec<&str> {
    let mut seen = BTreeSet::new();
    samples
        .iter()
        .filter(|s| seen.insert(s.subject.as_str()))
        .map(|s| s.subject.as_str())
        .collect()
}

/// Hold out `fraction` of the subjects, at least one when nonzero.
fn split_subjects<'a>(samples: &'a [Sample], fraction: f64, seed: u64) -> (Vec<&'a Sample>, Vec<&'a Sample>) {
    if fraction <= 0.0 {
        return (samples.iter().collect(), Vec::new());
    }
    let mut subjects = subjects_in_order(samples);
    Rng::derived(seed, "val").shuffle(&mut subjects);
    let n_val = ((subjects.len() as f64 * fraction).round() as usize).clamp(1, subjects.len().saturating_sub(1));
    let held: BTreeSet<&str> = subjects[..n_val].iter().copied().collect();
    samples.iter().partition(|s| !held.contains(s.subject.as_str()))
}

/// One epoch of shuffled minibatch Adam. Returns the summed loss.
pub fn train_epoch(
    model: &mut Model,
    train: &[&Sample],
    adam: &mut AdamState,
    batch_size: usize,
    shuffle: &mut Rng,
    dropout: &mut Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    shuffle.shuffle(&mut order);
    let mut total = 0.0;
    for idx in order.chunks(batch_size) {
        let batch: Vec<&Sample> = idx.iter().map(|&i| train[i]).collect();
        let mut g = Graph::new();
        let loss = model.loss_batch_with(&mut g, &model.store, &batch, true, dropout)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("training loss {value}")));
        }
        total += value;
        let grads = g.backward(loss)?.params(&g);
        adam_step(&mut model.store, &grads, adam)?;
    }
    Ok(total)
}

pub fn train_model(cfg: &ExperimentConfig, samples: &[Sample], seed: u64) -> Result<(Model, TrainLog)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Validation("no training samples".into()));
    }
    let mut model = Model::init(&cfg.model, seed)?;
    let (train, val) = split_subjects(samples, cfg.val_fraction, seed);
    if train.is_empty() {
        return Err(Error::Validation("validation split left no training samples".into()));
    }
    let mut adam = AdamState::new(&model.store, cfg.lr);
    let mut shuffle = Rng::derived(seed, "shuffle");
    let mut dropout = Rng::derived(seed, "dropout");
    let mut log = TrainLog::default();
    let mut best: Option<(f64, ParamStore)> = None;
    for epoch in 0..cfg.epochs {
        let loss = train_epoch(&mut model, &train, &mut adam, cfg.batch_size, &mut shuffle, &mut dropout)?;
        log::debug!("seed {seed} epoch {epoch}: loss {loss:.4}");
        log.epoch_loss.push(loss);
        if !val.is_empty() {
            let acc = evaluate_refs(&model, &val, cfg)?.report.values.accuracy;
            log.val_accuracy.push(acc);
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, model.store.clone()));
                log.best_epoch = Some(epoch);
            }
        }
    }
    if let Some((_, store)) = best {
        model.store = store;
    }
    Ok((model, log))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectPrediction {
    pub id: String,
    pub prob: f64,
    pub pred: Label,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub predictions: Vec<SubjectPrediction>,
}

fn evaluate_refs(model: &Model, samples: &[&Sample], cfg: &ExperimentConfig) -> Result<Evaluation> {
    let probs = model.predict_proba(samples)?;
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, (Label, Vec<f64>)> = HashMap::new();
    for (s, p) in samples.iter().zip(probs) {
        match groups.get_mut(s.subject.as_str()) {
            Some((label, ps)) => {
                if *label != s.label {
                    return Err(Error::Validation(format!("subject {} has segments with both labels", s.subject)));
                }
                ps.push(p);
            }
            None => {
                order.push(&s.subject);
                groups.insert(&s.subject, (s.label, vec![p]));
            }
        }
    }
    let mut predictions = Vec::with_capacity(order.len());
    for id in order {
        let (label, ps) = &groups[id];
        let prob = aggregate_subject(ps, cfg.aggregation, cfg.threshold)?;
        predictions.push(SubjectPrediction {
            id: id.to_owned(),
            prob,
            pred: subject_prediction(prob, cfg.aggregation, cfg.threshold),
            label: *label,
        });
    }
    let preds: Vec<Label> = predictions.iter().map(|p| p.pred).collect();
    let labels: Vec<Label> = predictions.iter().map(|p| p.label).collect();
    let report = metrics(&confusion(&preds, &labels)?)?;
    Ok(Evaluation { report, predictions })
}

/// Subject-level evaluation: segment probabilities are aggregated per subject
/// before thresholding.
pub fn evaluate(model: &Model, samples: &[Sample], cfg: &ExperimentConfig) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Validation("no evaluation samples".into()));
    }
    let refs: Vec<&Sample> = samples.iter().collect();
    evaluate_refs(model, &refs, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub report: MetricsReport,
    pub log: TrainLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub per_seed: Vec<SeedRun>,
    pub averaged: SeedAverage,
    /// Number of test subjects scored in each run.
    pub evaluated_on: usize,
}

/// Train and evaluate once per configured seed. The first seed's model is
/// returned alongside the results.
pub fn run_experiment(cfg: &ExperimentConfig, train: &[Sample], test: &[Sample]) -> Result<(RunResult, Model)> {
    cfg.validate()?;
    let mut per_seed = Vec::new();
    let mut first = None;
    let mut evaluated_on = 0;
    for &seed in &cfg.seeds {
        let (model, log) = train_model(cfg, train, seed)?;
        let ev = evaluate(&model, test, cfg)?;
        evaluated_on = ev.predictions.len();
        log::info!(
            "seed {seed}: accuracy {:.4} on {} subjects",
            ev.report.values.accuracy,
            evaluated_on
        );
        per_seed.push(SeedRun {
            seed,
            report: ev.report,
            log,
        });
        first.get_or_insert(model);
    }
    let reports: Vec<MetricsReport> = per_seed.iter().map(|r| r.report.clone()).collect();
    let result = RunResult {
        config: cfg.clone(),
        averaged: average_over_seeds(&reports)?,
        per_seed,
        evaluated_on,
    };
    Ok((result, first.expect("seeds validated non-empty")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{EmbeddingDims, Separation, SyntheticGenerator};

    fn small_cfg() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.model.dims = EmbeddingDims {
            d_w: 6,
            d_m: 5,
            d_s: 7,
            d_t: 8,
        };
        c.model.d_e = 4;
        c.model.expert_hidden = 6;
        c.model.mlp_h1 = 8;
        c.model.mlp_h2 = 4;
        c.epochs = 30;
        c.batch_size = 8;
        c.seeds = vec![3];
        c
    }

    fn cohort(cfg: &ExperimentConfig, n: usize, seed: u64, sep: f64) -> Vec<Sample> {
        let gen = SyntheticGenerator::new(7, cfg.model.dims);
        (0..n)
            .map(|i| {
                let label = Label::from_bit((i % 2) as u8);
                let b = gen.sample(seed * 1000 + i as u64, &format!("s{i}"), label, &Separation::uniform(sep)).unwrap();
                Sample::from(b)
            })
            .collect()
    }

    #[test]
    fn training_is_deterministic_and_lowers_loss() {
        let cfg = small_cfg();
        let data = cohort(&cfg, 24, 1, 4.0);
        let (a, la) = train_model(&cfg, &data, 5).unwrap();
        let (b, lb) = train_model(&cfg, &data, 5).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a.store, b.store);
        assert!(la.epoch_loss.last().unwrap() < &la.epoch_loss[0]);
    }

    #[test]
    fn subjects_aggregate_segments() {
        let cfg = small_cfg();
        let mut data = cohort(&cfg, 6, 2, 4.0);
        for s in data.iter_mut().take(4) {
            s.subject = "shared".into();
            s.label = Label::Ad;
        }
        let model = Model::init(&cfg.model, 1).unwrap();
        let ev = evaluate(&model, &data, &cfg).unwrap();
        assert_eq!(ev.predictions.len(), 3);
        assert_eq!(ev.predictions[0].id, "shared");
        let probs = model.predict_proba(&data.iter().take(4).collect::<Vec<_>>()).unwrap();
        let mean = probs.iter().sum::<f64>() / 4.0;
        assert!((ev.predictions[0].prob - mean).abs() < 1e-12);

        data[1].label = Label::Cn;
        assert!(evaluate(&model, &data, &cfg).is_err());
    }

    #[test]
    fn validation_split_keeps_best_epoch() {
        let mut cfg = small_cfg();
        cfg.val_fraction = 0.25;
        let data = cohort(&cfg, 24, 3, 4.0);
        let (_, log) = train_model(&cfg, &data, 2).unwrap();
        assert_eq!(log.val_accuracy.len(), cfg.epochs);
        let best = log.best_epoch.unwrap();
        let max = log.val_accuracy.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(log.val_accuracy[best], max);
    }

    #[test]
    fn experiment_runs_every_seed() {
        let mut cfg = small_cfg();
        cfg.seeds = vec![1, 2];
        cfg.epochs = 5;
        let train = cohort(&cfg, 16, 4, 4.0);
        let test = cohort(&cfg, 8, 5, 4.0);
        let (r, _) = run_experiment(&cfg, &train, &test).unwrap();
        assert_eq!(r.per_seed.len(), 2);
        assert_eq!(r.averaged.runs, 2);
        assert_eq!(r.evaluated_on, 8);
    }
}
