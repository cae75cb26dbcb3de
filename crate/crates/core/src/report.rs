//! Experiment results as CSV and JSON tables.
//!
//! Every table holds one row per trial and condition followed by a `mean`
//! row per condition. CSV output starts with a `#` comment line naming the
//! schema version; the JSON form carries the same rows.

use crate::agent::Task;
use crate::sim::{Condition, Metrics, Noise, NormTrial, PredictionTrial, TaskTrial};
use serde::Serialize;
use serde_json::{json, Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Row {
    /// Trial index, or `mean`.
    pub trial: String,
    pub conditions: Vec<String>,
    pub metrics: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Table {
    pub experiment: String,
    pub condition_columns: Vec<String>,
    pub metric_columns: Vec<String>,
    pub rows: Vec<Row>,
}

fn fmt_metric(v: f64) -> String {
    format!("{v:.6}")
}

impl Table {
    fn new(experiment: &str, conditions: &[&str], metrics: &[&str]) -> Self {
        Self {
            experiment: experiment.to_owned(),
            condition_columns: conditions.iter().map(|s| (*s).to_owned()).collect(),
            metric_columns: metrics.iter().map(|s| (*s).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends one row per trial and a mean row.
    fn push_group(&mut self, conditions: Vec<String>, trials: Vec<(usize, Vec<f64>)>) {
        let width = self.metric_columns.len();
        let mut sums = vec![0.0; width];
        let n = trials.len();
        for (trial, metrics) in trials {
            debug_assert_eq!(metrics.len(), width);
            for (s, m) in sums.iter_mut().zip(&metrics) {
                *s += m;
            }
            self.rows.push(Row {
                trial: trial.to_string(),
                conditions: conditions.clone(),
                metrics,
            });
        }
        self.rows.push(Row {
            trial: "mean".to_owned(),
            conditions,
            metrics: sums.into_iter().map(|s| if n == 0 { 0.0 } else { s / n as f64 }).collect(),
        });
    }

    pub fn means(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| r.trial == "mean")
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["trial".to_owned()];
        header.extend(self.condition_columns.iter().cloned());
        header.extend(self.metric_columns.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.trial.clone()];
            rec.extend(row.conditions.iter().cloned());
            rec.extend(row.metrics.iter().map(|m| fmt_metric(*m)));
            w.write_record(&rec)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8");
        Ok(format!("# schema=ownership-norms/{SCHEMA_VERSION} experiment={}\n{body}", self.experiment))
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = Map::new();
                m.insert("trial".into(), json!(r.trial));
                for (k, v) in self.condition_columns.iter().zip(&r.conditions) {
                    m.insert(k.clone(), json!(v));
                }
                for (k, v) in self.metric_columns.iter().zip(&r.metrics) {
                    m.insert(k.clone(), json!(fmt_metric(*v).parse::<f64>().expect("formatted float")));
                }
                Value::Object(m)
            })
            .collect();
        json!({
            "schema": format!("ownership-norms/{SCHEMA_VERSION}"),
            "experiment": self.experiment,
            "rows": rows,
        })
    }
}

fn pair(m: &Metrics) -> Vec<f64> {
    vec![m.accuracy, m.f1]
}

/// Norm learning: induced rules and the empty-rule baseline per condition.
pub fn norm_table(groups: &[(Noise, f64, Vec<NormTrial>)]) -> Table {
    let mut t = Table::new("norm", &["noise", "fraction", "rules"], &["accuracy", "f1"]);
    for (noise, fraction, trials) in groups {
        for (label, pick) in [("induced", true), ("baseline", false)] {
            let rows = trials
                .iter()
                .map(|tr| (tr.trial, pair(if pick { &tr.learned } else { &tr.baseline })))
                .collect();
            t.push_group(vec![noise.to_string(), format!("{fraction:.2}"), label.to_owned()], rows);
        }
    }
    t
}

/// Ownership prediction per condition.
pub fn prediction_table(groups: &[(Condition, Vec<PredictionTrial>)]) -> Table {
    let mut t = Table::new("predict", &["condition"], &["accuracy", "f1"]);
    for (condition, trials) in groups {
        let rows = trials.iter().map(|tr| (tr.trial, pair(&tr.ownership))).collect();
        t.push_group(vec![condition.to_string()], rows);
    }
    t
}

/// Task runs with and without learning.
pub fn task_table(groups: &[(Task, bool, Vec<TaskTrial>)]) -> Table {
    let mut t = Table::new(
        "task",
        &["task", "learning"],
        &["mistakes", "rule_accuracy", "rule_f1", "ownership_accuracy", "ownership_f1"],
    );
    for (task, learning, trials) in groups {
        let rows = trials
            .iter()
            .map(|tr| {
                (
                    tr.trial,
                    vec![
                        tr.mistakes as f64,
                        tr.rules.accuracy,
                        tr.rules.f1,
                        tr.ownership.accuracy,
                        tr.ownership.f1,
                    ],
                )
            })
            .collect();
        let learning = if *learning { "on" } else { "off" };
        t.push_group(vec![task.to_string(), learning.to_owned()], rows);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trials() -> Vec<PredictionTrial> {
        vec![
            PredictionTrial {
                trial: 0,
                ownership: Metrics { accuracy: 1.0, f1: 0.5 },
            },
            PredictionTrial {
                trial: 1,
                ownership: Metrics { accuracy: 0.5, f1: 0.25 },
            },
        ]
    }

    #[test]
    fn csv_has_version_header_and_means() {
        let t = prediction_table(&[(Condition::NoneOff, trials())]);
        let csv = t.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# schema=ownership-norms/1 experiment=predict");
        assert_eq!(lines[1], "trial,condition,accuracy,f1");
        assert_eq!(lines[2], "0,noneOff,1.000000,0.500000");
        assert_eq!(lines[4], "mean,noneOff,0.750000,0.375000");
    }

    #[test]
    fn json_mirrors_csv() {
        let t = prediction_table(&[(Condition::GivenOn, trials())]);
        let j = t.to_json();
        assert_eq!(j["rows"].as_array().unwrap().len(), 3);
        assert_eq!(j["rows"][2]["trial"], "mean");
        assert_eq!(j["rows"][2]["accuracy"], 0.75);
        assert_eq!(j["rows"][0]["condition"], "givenOn");
    }
}
