use std::collections::BTreeMap;

use super::ranking::RankingResult;

/// First non-empty component of `surface` split on `separator`; the whole
/// surface when it has none.
pub fn category_of(surface: &str, separator: char) -> &str {
    surface
        .split(separator)
        .find(|c| !c.is_empty())
        .unwrap_or(surface)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoryRank {
    pub category: String,
    pub mean_rank: f64,
    pub count: usize,
}

/// Mean tail rank per relation category, ascending by mean rank then name.
pub fn rank_breakdown_by_category(
    result: &RankingResult,
    relation_names: &[String],
    separator: char,
) -> Vec<CategoryRank> {
    let mut groups: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (t, &rank) in result.triples.iter().zip(&result.tail_ranks) {
        let g = groups
            .entry(category_of(&relation_names[t.relation as usize], separator))
            .or_default();
        g.0 += rank as f64;
        g.1 += 1;
    }
    let mut rows: Vec<CategoryRank> = groups
        .into_iter()
        .map(|(c, (sum, n))| CategoryRank {
            category: c.to_string(),
            mean_rank: sum / n as f64,
            count: n,
        })
        .collect();
    rows.sort_by(|a, b| a.mean_rank.total_cmp(&b.mean_rank).then_with(|| a.category.cmp(&b.category)));
    rows
}
