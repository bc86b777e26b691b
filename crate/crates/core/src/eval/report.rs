//! Plain-text renderings of evaluation results.

use std::fmt::Write;

use super::breakdown::CategoryRank;
use super::classify::ClassificationReport;
use super::ranking::{Metrics, RankingResult};

fn subtasks(result: &RankingResult) -> [(&'static str, &Metrics); 3] {
    [("head", &result.head), ("tail", &result.tail), ("avg", &result.average)]
}

/// One `metric<TAB>subtask<TAB>value` line per metric.
pub fn metrics_tsv(result: &RankingResult) -> String {
    let mut out = String::new();
    for (name, m) in subtasks(result) {
        writeln!(out, "MRR\t{name}\t{:.6}", m.mrr).unwrap();
        writeln!(out, "MR\t{name}\t{:.6}", m.mr).unwrap();
        writeln!(out, "Hits@10\t{name}\t{:.6}", m.hits10).unwrap();
    }
    out
}

pub fn metrics_table(result: &RankingResult) -> String {
    let mut out = format!("{:<8}{:>10}{:>12}{:>10}\n", "", "MRR", "MR", "Hits@10");
    for (name, m) in subtasks(result) {
        writeln!(out, "{name:<8}{:>10.4}{:>12.2}{:>10.4}", m.mrr, m.mr, m.hits10).unwrap();
    }
    out
}

/// `head relation tail head_rank tail_rank` per test triple, with a header.
pub fn ranks_tsv(result: &RankingResult, entity_names: &[String], relation_names: &[String]) -> String {
    let mut out = String::from("head\trelation\ttail\thead_rank\ttail_rank\n");
    for ((t, h), r) in result.triples.iter().zip(&result.head_ranks).zip(&result.tail_ranks) {
        writeln!(
            out,
            "{}\t{}\t{}\t{h}\t{r}",
            entity_names[t.head as usize], relation_names[t.relation as usize], entity_names[t.tail as usize]
        )
        .unwrap();
    }
    out
}

pub fn breakdown_tsv(rows: &[CategoryRank]) -> String {
    let mut out = String::from("category\tmean_rank\tcount\n");
    for r in rows {
        writeln!(out, "{}\t{:.6}\t{}", r.category, r.mean_rank, r.count).unwrap();
    }
    out
}

/// `accuracy<TAB>all<TAB>value` followed by one line per relation.
pub fn classification_tsv(report: &ClassificationReport, relation_names: &[String]) -> String {
    let mut out = format!("accuracy\tall\t{:.6}\n", report.accuracy);
    for (&r, acc) in &report.per_relation {
        writeln!(out, "accuracy\t{}\t{:.6}", relation_names[r as usize], acc.accuracy()).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Triple;

    #[test]
    fn tsv_has_nine_lines() {
        let r = RankingResult::from_ranks(vec![Triple::new(0, 0, 1)], vec![1], vec![2]);
        let text = metrics_tsv(&r);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[0], "MRR\thead\t1.000000");
        assert_eq!(lines[4], "MR\ttail\t2.000000");
        assert_eq!(lines[6], "MRR\tavg\t0.750000");
        let names = vec!["a".to_string(), "b".to_string()];
        let ranks = ranks_tsv(&r, &names, &["r".to_string()]);
        assert_eq!(ranks.lines().nth(1), Some("a\tr\tb\t1\t2"));
    }
}
