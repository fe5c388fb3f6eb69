//! Verification trial lists over a labeled dataset.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::vae::VaeModel;

use super::{compute_eer, cosine_similarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialLabel {
    Target,
    NonTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trial {
    pub a: usize,
    pub b: usize,
    pub label: TrialLabel,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn target_count(&self) -> usize {
        self.trials.iter().filter(|t| t.label == TrialLabel::Target).count()
    }

    pub fn nontarget_count(&self) -> usize {
        self.trials.len() - self.target_count()
    }

    pub fn save<P: AsRef<Path>>(&self, path: P, dataset: &Dataset) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = std::io::BufWriter::new(file);
        for t in &self.trials {
            let label = match t.label {
                TrialLabel::Target => "target",
                TrialLabel::NonTarget => "nontarget",
            };
            writeln!(w, "{} {} {}", dataset.ids[t.a], dataset.ids[t.b], label)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P, dataset: &Dataset) -> Result<TrialList> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::io(display.clone(), e))?;
        let reader = std::io::BufReader::new(file);
        let mut trials = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::io(display.clone(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    path: display,
                    line: line_no,
                    message: format!("expected 'id_a id_b label', got '{line}'"),
                });
            }
            let resolve = |id: &str| {
                dataset.index_of_id(id).ok_or_else(|| Error::Parse {
                    path: display.clone(),
                    line: line_no,
                    message: format!("unknown id '{id}'"),
                })
            };
            let a = resolve(parts[0])?;
            let b = resolve(parts[1])?;
            let label = match parts[2] {
                "target" => TrialLabel::Target,
                "nontarget" => TrialLabel::NonTarget,
                other => {
                    return Err(Error::Parse {
                        path: display,
                        line: line_no,
                        message: format!("unknown trial label '{other}'"),
                    })
                }
            };
            trials.push(Trial { a, b, label });
        }
        Ok(TrialList { trials })
    }
}

/// Balanced same-class / different-class pairs, at most `max_trials_per_class`
/// of each kind per class, deterministic under `seed`, no self-pairs.
pub fn build_trial_list(
    class_of: &[usize],
    max_trials_per_class: usize,
    seed: u64,
) -> Result<TrialList> {
    if max_trials_per_class == 0 {
        return Err(Error::InvalidConfig("max_trials_per_class must be > 0".into()));
    }
    let n_classes = class_of.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (idx, &c) in class_of.iter().enumerate() {
        members[c].push(idx);
    }
    if n_classes < 2 {
        return Err(Error::DegenerateLabels(format!(
            "need at least 2 classes for trials, got {n_classes}"
        )));
    }
    if let Some((c, m)) = members.iter().enumerate().find(|(_, m)| m.len() < 2) {
        return Err(Error::DegenerateLabels(format!(
            "class {c} has {} member(s); every class needs at least 2 for target trials",
            m.len()
        )));
    }

    let mut trials = Vec::new();
    for (c, mem) in members.iter().enumerate() {
        // independent per-class stream so the list is schedule-independent
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 + c as u64);

        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for i in 0..mem.len() {
            for j in i + 1..mem.len() {
                pairs.push((mem[i], mem[j]));
            }
        }
        let n_targets = pairs.len().min(max_trials_per_class);
        // partial Fisher-Yates: the first n_targets slots become the sample
        for i in 0..n_targets {
            let j = rng.gen_range(i..pairs.len());
            pairs.swap(i, j);
        }
        for &(a, b) in pairs.iter().take(n_targets) {
            trials.push(Trial {
                a,
                b,
                label: TrialLabel::Target,
            });
        }

        for _ in 0..n_targets {
            let a = mem[rng.gen_range(0..mem.len())];
            let b = loop {
                let cand = rng.gen_range(0..class_of.len());
                if class_of[cand] != c {
                    break cand;
                }
            };
            trials.push(Trial {
                a,
                b,
                label: TrialLabel::NonTarget,
            });
        }
    }
    Ok(TrialList { trials })
}

/// Reconstructs every observation through the posterior mean, scores each
/// trial by cosine similarity of the reconstructions, and returns the EER.
pub fn eer_on_reconstructions(
    model: &VaeModel,
    dataset: &Dataset,
    trials: &TrialList,
) -> Result<f64> {
    let recon = model.reconstruct_mean(&dataset.observations)?;
    let mut target_scores = Vec::with_capacity(trials.target_count());
    let mut nontarget_scores = Vec::with_capacity(trials.nontarget_count());
    for t in &trials.trials {
        if t.a >= recon.nrows() || t.b >= recon.nrows() {
            return Err(Error::InvalidConfig(format!(
                "trial index ({}, {}) out of range for {} rows",
                t.a,
                t.b,
                recon.nrows()
            )));
        }
        let score = cosine_similarity(recon.row(t.a), recon.row(t.b))?;
        match t.label {
            TrialLabel::Target => target_scores.push(score),
            TrialLabel::NonTarget => nontarget_scores.push(score),
        }
    }
    compute_eer(&target_scores, &nontarget_scores)
}
