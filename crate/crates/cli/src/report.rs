//! Strategy comparison tables.
//!
//! Aggregates evaluation records into one row per strategy — accuracy, mean
//! input/output tokens, and (when a classification map is supplied)
//! per-category accuracy — rendered as a fixed-width text table, as CSV, and
//! as full-precision JSON. Table and CSV numbers are fixed at two decimals;
//! the JSON carries the unrounded values.

use std::collections::BTreeMap;
use std::fmt::Write;

use rb_core::{EvalRecord, RBCategory, StrategyTag};
use serde::Serialize;

const CATEGORY_ORDER: [RBCategory; 3] = [RBCategory::CFRB, RBCategory::PFRB, RBCategory::CIRB];

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default)]
struct CatAgg {
    n: u64,
    correct: u64,
}

impl CatAgg {
    fn acc(&self) -> f64 {
        self.correct as f64 / self.n as f64
    }
}

#[derive(Debug, Clone)]
struct Row {
    strategy: StrategyTag,
    n: u64,
    correct: u64,
    input_tokens: u64,
    output_tokens: u64,
    cats: [CatAgg; 3],
}

impl Row {
    fn new(strategy: StrategyTag) -> Self {
        Row {
            strategy,
            n: 0,
            correct: 0,
            input_tokens: 0,
            output_tokens: 0,
            cats: [CatAgg::default(); 3],
        }
    }

    fn acc(&self) -> f64 {
        self.correct as f64 / self.n as f64
    }

    fn mean_in(&self) -> f64 {
        self.input_tokens as f64 / self.n as f64
    }

    fn mean_out(&self) -> f64 {
        self.output_tokens as f64 / self.n as f64
    }
}

/// Per-strategy aggregation in first-appearance order. Records missing a
/// grade count as incorrect; an unknown problem id is an error only when a
/// classification map is in play (it would silently skew the category
/// columns otherwise).
pub struct Rows {
    categories: Option<BTreeMap<String, RBCategory>>,
    rows: Vec<Row>,
}

impl Rows {
    pub fn new(categories: Option<BTreeMap<String, RBCategory>>) -> Self {
        Rows {
            categories,
            rows: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn add(&mut self, records: &[EvalRecord]) -> Result<(), String> {
        for r in records {
            let cat_idx = match &self.categories {
                Some(map) => match map.get(&r.problem_id) {
                    Some(cat) => Some(
                        CATEGORY_ORDER
                            .iter()
                            .position(|c| c == cat)
                            .expect("all categories are in the order table"),
                    ),
                    None => {
                        return Err(format!(
                            "record references problem `{}` absent from the dataset",
                            r.problem_id
                        ))
                    }
                },
                None => None,
            };
            let row = match self.rows.iter_mut().find(|row| row.strategy == r.strategy) {
                Some(row) => row,
                None => {
                    self.rows.push(Row::new(r.strategy));
                    self.rows.last_mut().expect("just pushed")
                }
            };
            let correct = r.grade.as_ref().is_some_and(|g| g.answer_correct);
            row.n += 1;
            row.correct += u64::from(correct);
            row.input_tokens += r.input_tokens;
            row.output_tokens += r.output_tokens;
            if let Some(i) = cat_idx {
                row.cats[i].n += 1;
                row.cats[i].correct += u64::from(correct);
            }
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // Rendering
    // -----------------------------------------------------------------------

    fn headers(&self) -> Vec<&'static str> {
        let mut h = vec!["Strategy", "Acc", "Input Token", "Output Token"];
        if self.categories.is_some() {
            h.extend(["CFRB Acc", "PFRB Acc", "CIRB Acc"]);
        }
        h
    }

    /// Cell strings; accuracies are percentages at two decimals, empty
    /// categories are `-`.
    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut cells = vec![
                    r.strategy.name().to_string(),
                    fmt2(100.0 * r.acc()),
                    fmt2(r.mean_in()),
                    fmt2(r.mean_out()),
                ];
                if self.categories.is_some() {
                    for c in &r.cats {
                        cells.push(if c.n == 0 {
                            "-".to_string()
                        } else {
                            fmt2(100.0 * c.acc())
                        });
                    }
                }
                cells
            })
            .collect()
    }

    pub fn render_text(&self) -> String {
        let headers = self.headers();
        let table = self.cells();
        let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
        for row in &table {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            for (i, cell) in cells.iter().enumerate() {
                if i > 0 {
                    out.push_str("  ");
                }
                if i == 0 {
                    write!(out, "{cell:<width$}", width = widths[0]).unwrap();
                } else {
                    write!(out, "{cell:>width$}", width = widths[i]).unwrap();
                }
            }
            out.push('\n');
        };
        line(&headers.iter().map(|h| h.to_string()).collect::<Vec<_>>());
        for row in &table {
            line(row);
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = self.headers().join(",");
        out.push('\n');
        for row in self.cells() {
            let cols: Vec<String> = row
                .into_iter()
                .map(|c| if c == "-" { String::new() } else { c })
                .collect();
            out.push_str(&cols.join(","));
            out.push('\n');
        }
        out
    }

    pub fn render_json(&self) -> String {
        #[derive(Serialize)]
        struct CatJson {
            records: u64,
            accuracy: f64,
        }
        #[derive(Serialize)]
        struct RowJson<'a> {
            strategy: &'a str,
            records: u64,
            accuracy: f64,
            input_tokens_mean: f64,
            output_tokens_mean: f64,
            #[serde(skip_serializing_if = "Option::is_none")]
            categories: Option<BTreeMap<&'static str, CatJson>>,
        }

        let rows: Vec<RowJson> = self
            .rows
            .iter()
            .map(|r| RowJson {
                strategy: r.strategy.name(),
                records: r.n,
                accuracy: r.acc(),
                input_tokens_mean: r.mean_in(),
                output_tokens_mean: r.mean_out(),
                categories: self.categories.as_ref().map(|_| {
                    CATEGORY_ORDER
                        .iter()
                        .zip(&r.cats)
                        .filter(|(_, agg)| agg.n > 0)
                        .map(|(cat, agg)| {
                            let name = match cat {
                                RBCategory::CFRB => "CFRB",
                                RBCategory::PFRB => "PFRB",
                                RBCategory::CIRB => "CIRB",
                            };
                            (
                                name,
                                CatJson {
                                    records: agg.n,
                                    accuracy: agg.acc(),
                                },
                            )
                        })
                        .collect()
                }),
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n"
    }
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn record(problem_id: &str, strategy: &str, correct: bool, tokens: (u64, u64)) -> EvalRecord {
        let json = format!(
            r#"{{"problem_id":"{problem_id}","strategy":"{strategy}","model_id":"m",
                "samples":["x"],
                "grade":{{"answer_correct":{correct},"plan_steps":1,"max_calc":"4","calc_all_correct":true}},
                "input_tokens":{},"output_tokens":{},"latency_ms":0}}"#,
            tokens.0, tokens.1
        );
        serde_json::from_str(&json).expect("test record parses")
    }

    fn cat_map(entries: &[(&str, RBCategory)]) -> BTreeMap<String, RBCategory> {
        entries.iter().map(|(id, c)| (id.to_string(), *c)).collect()
    }

    #[test]
    fn single_strategy_all_correct_reads_one_hundred() {
        let mut rows = Rows::new(None);
        rows.add(&[
            record("a", "direct", true, (10, 4)),
            record("b", "direct", true, (14, 6)),
        ])
        .unwrap();
        let text = rows.render_text();
        assert_eq!(
            text,
            "Strategy     Acc  Input Token  Output Token\n\
             direct    100.00        12.00          5.00\n"
        );
    }

    #[test]
    fn strategies_keep_first_appearance_order() {
        let mut rows = Rows::new(None);
        rows.add(&[record("a", "pot", false, (1, 1))]).unwrap();
        rows.add(&[record("a", "direct", true, (1, 1))]).unwrap();
        rows.add(&[record("b", "pot", true, (1, 1))]).unwrap();
        let text = rows.render_text();
        let pot_line = text.lines().position(|l| l.starts_with("pot")).unwrap();
        let direct_line = text.lines().position(|l| l.starts_with("direct")).unwrap();
        assert!(pot_line < direct_line);
        assert!(text.lines().nth(pot_line).unwrap().contains("50.00"));
    }

    #[test]
    fn category_columns_render_and_recompose() {
        let cats = cat_map(&[
            ("a", RBCategory::CFRB),
            ("b", RBCategory::PFRB),
            ("c", RBCategory::PFRB),
            ("d", RBCategory::CIRB),
        ]);
        let mut rows = Rows::new(Some(cats));
        rows.add(&[
            record("a", "cot3", true, (10, 10)),
            record("b", "cot3", true, (10, 10)),
            record("c", "cot3", false, (10, 10)),
            record("d", "cot3", false, (10, 10)),
        ])
        .unwrap();

        let text = rows.render_text();
        assert!(text.contains("CFRB Acc"));
        let row = &rows.rows[0];
        // Trials-weighted category accuracies recompose the overall accuracy.
        let recomposed: f64 = row
            .cats
            .iter()
            .filter(|c| c.n > 0)
            .map(|c| c.acc() * c.n as f64)
            .sum::<f64>()
            / row.n as f64;
        assert!((recomposed - row.acc()).abs() < 1e-12);

        let csv = rows.render_csv();
        assert_eq!(
            csv,
            "Strategy,Acc,Input Token,Output Token,CFRB Acc,PFRB Acc,CIRB Acc\n\
             cot3,50.00,10.00,10.00,100.00,50.00,0.00\n"
        );
    }

    #[test]
    fn empty_category_shows_dash_in_text_and_blank_in_csv() {
        let cats = cat_map(&[("a", RBCategory::CFRB)]);
        let mut rows = Rows::new(Some(cats));
        rows.add(&[record("a", "ltm", true, (3, 3))]).unwrap();
        let text = rows.render_text();
        assert!(text.lines().nth(1).unwrap().trim_end().ends_with('-'));
        let csv = rows.render_csv();
        assert!(csv.lines().nth(1).unwrap().ends_with(",100.00,,"));
    }

    #[test]
    fn unknown_problem_id_is_an_error_with_categories() {
        let cats = cat_map(&[("a", RBCategory::CFRB)]);
        let mut rows = Rows::new(Some(cats));
        let err = rows.add(&[record("zz", "direct", true, (1, 1))]);
        assert!(err.is_err());
        // Without categories the same record is fine.
        let mut rows = Rows::new(None);
        rows.add(&[record("zz", "direct", true, (1, 1))]).unwrap();
        assert!(!rows.is_empty());
    }

    #[test]
    fn json_carries_full_precision() {
        let mut rows = Rows::new(None);
        rows.add(&[
            record("a", "tool", true, (1, 2)),
            record("b", "tool", false, (2, 3)),
            record("c", "tool", false, (2, 3)),
        ])
        .unwrap();
        let json = rows.render_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        let acc = parsed[0]["accuracy"].as_f64().unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 1e-15);
        assert!(parsed[0].get("categories").is_none());
    }

    #[test]
    fn missing_grade_counts_as_incorrect() {
        let json = r#"{"problem_id":"a","strategy":"direct","model_id":"m",
            "samples":[""],"grade":null,"input_tokens":0,"output_tokens":0,"latency_ms":0}"#;
        let rec: EvalRecord = serde_json::from_str(json).unwrap();
        let mut rows = Rows::new(None);
        rows.add(&[rec]).unwrap();
        assert_eq!(rows.rows[0].correct, 0);
        assert_eq!(rows.rows[0].n, 1);
    }
}
