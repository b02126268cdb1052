use std::str::FromStr;
use std::sync::Mutex;

use serde::Serialize;

use crate::sim::{self, RunSummary, Scenario, SimError};
use crate::Micros;

/// A numeric scenario field that a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Chunks,
    ChunkSize,
    LinkLoss,
    LinkCollision,
    PollPeriod,
    TagLen,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 6] = [
        SweepAxis::Chunks,
        SweepAxis::ChunkSize,
        SweepAxis::LinkLoss,
        SweepAxis::LinkCollision,
        SweepAxis::PollPeriod,
        SweepAxis::TagLen,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Chunks => "chunks",
            SweepAxis::ChunkSize => "chunk_size",
            SweepAxis::LinkLoss => "link.loss",
            SweepAxis::LinkCollision => "link.collision",
            SweepAxis::PollPeriod => "timing.poll_period_s",
            SweepAxis::TagLen => "tag_len",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario, SimError> {
        let mut s = base.clone();
        let whole = |v: f64| -> Result<u64, SimError> {
            if v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64 {
                Ok(v as u64)
            } else {
                Err(SimError::invalid(
                    self.as_str(),
                    format!("{v} is not a whole number"),
                ))
            }
        };
        match self {
            SweepAxis::Chunks => {
                s.chunks = Some(whole(value)? as u32);
                s.image_size = None;
                s.image = None;
            }
            SweepAxis::ChunkSize => {
                s.chunk_size = whole(value)? as u32;
                s.image = None;
            }
            SweepAxis::LinkLoss => s.link.loss = value,
            SweepAxis::LinkCollision => s.link.collision = value,
            SweepAxis::PollPeriod => s.timing.poll_period_s = whole(value)?,
            SweepAxis::TagLen => {
                s.tag_len = crate::vendor::TruncLen::new(whole(value)? as usize)
                    .map_err(|e| SimError::invalid("tag_len", e.to_string()))?;
            }
        }
        s.validate()?;
        Ok(s)
    }
}

impl FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SweepAxis::ALL.iter().map(|a| a.as_str()).collect();
                format!("unknown axis {s:?}, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepMedian {
    pub value: f64,
    pub runs: usize,
    pub completed_runs: usize,
    /// Median over completed runs of the time the last node finished.
    pub median_completion_us: Option<Micros>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub medians: Vec<SweepMedian>,
}

/// Time the last updating node finished, if every one did.
pub fn total_completion(s: &RunSummary) -> Option<Micros> {
    (s.completed == s.updating).then(|| s.completion_us.values().copied().max().unwrap_or(0))
}

fn median(mut v: Vec<Micros>) -> Option<Micros> {
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    })
}

/// Run `base` once per (value, seed) pair. Runs execute on up to `threads`
/// workers; rows come back ordered by value, then seed, as given.
pub fn sweep(
    base: &Scenario,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    threads: usize,
) -> Result<SweepResult, SimError> {
    let mut jobs = Vec::with_capacity(values.len() * seeds.len());
    for &v in values {
        let s = axis.apply(base, v)?;
        for &seed in seeds {
            let mut run = s.clone();
            run.seed = seed;
            jobs.push((v, run));
        }
    }
    let slots: Vec<Mutex<Option<Result<RunSummary, SimError>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = Mutex::new(0usize);
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("job counter");
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some((_, scenario)) = jobs.get(i) else {
                    break;
                };
                let out = sim::run(scenario).map(|o| o.summary);
                *slots[i].lock().expect("result slot") = Some(out);
            });
        }
    });
    let mut rows = Vec::with_capacity(jobs.len());
    for ((value, scenario), slot) in jobs.iter().zip(slots) {
        let summary = slot
            .into_inner()
            .expect("result slot")
            .expect("every job ran")?;
        rows.push(SweepRow {
            value: *value,
            seed: scenario.seed,
            summary,
        });
    }
    let medians = values
        .iter()
        .map(|&v| {
            let of_value: Vec<&SweepRow> = rows.iter().filter(|r| r.value == v).collect();
            let done: Vec<Micros> = of_value
                .iter()
                .filter_map(|r| total_completion(&r.summary))
                .collect();
            SweepMedian {
                value: v,
                runs: of_value.len(),
                completed_runs: done.len(),
                median_completion_us: median(done),
            }
        })
        .collect();
    Ok(SweepResult {
        axis,
        rows,
        medians,
    })
}

impl SweepResult {
    /// One line per run.
    pub fn rows_csv(&self) -> String {
        let mut out = format!(
            "{},seed,updating,completed,completion_us,link_retx,net_retx,app_retx,aborts,tag_failures\n",
            self.axis.as_str()
        );
        for r in &self.rows {
            let s = &r.summary;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.value,
                r.seed,
                s.updating,
                s.completed,
                total_completion(s)
                    .map(|t| t.to_string())
                    .unwrap_or_default(),
                s.retransmissions.link,
                s.retransmissions.network,
                s.retransmissions.application,
                s.aborts.len(),
                s.tag_failures,
            ));
        }
        out
    }

    pub fn medians_csv(&self) -> String {
        let mut out = format!(
            "{},runs,completed_runs,median_completion_us\n",
            self.axis.as_str()
        );
        for m in &self.medians {
            out.push_str(&format!(
                "{},{},{},{}\n",
                m.value,
                m.runs,
                m.completed_runs,
                m.median_completion_us
                    .map(|t| t.to_string())
                    .unwrap_or_default()
            ));
        }
        out
    }
}
