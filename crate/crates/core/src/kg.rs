//! Knowledge-graph ingestion, vocabularies, adjacency and the filtered
//! candidate index used by link prediction.
//!
//! Relation ids are laid out as `[base relations | inverse relations | EOS]`.
//! With inverses enabled, the inverse of base relation `r` is `r + n_base`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

pub type EntityId = u32;
pub type RelationId = u32;

/// Surface string of the sentinel relation attached to a chain's last entity.
pub const EOS_RELATION: &str = "<eos>";
/// Suffix appended to a relation's surface to name its synthesized inverse.
pub const INVERSE_SUFFIX: &str = "_inv";

/// A triple of surface strings as read from a TSV file.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RawTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl RawTriple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        RawTriple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub const fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Parses `head<TAB>relation<TAB>tail` lines. `source` names the input in
/// error messages.
pub fn parse_triples(text: &str, source: &str) -> Result<Vec<RawTriple>> {
    let mut out = Vec::new();
    for (idx, line) in text.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: source.to_string(),
                line: idx + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        out.push(RawTriple::new(fields[0], fields[1], fields[2]));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(source.to_string()));
    }
    Ok(out)
}

pub fn load_triples(path: impl AsRef<Path>) -> Result<Vec<RawTriple>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triples(&text, &path.display().to_string())
}

/// Parses `head<TAB>relation<TAB>tail<TAB>label` lines where label is
/// `1`/`-1` (also `true`/`false`, `0` for negative).
pub fn parse_labeled_triples(text: &str, source: &str) -> Result<Vec<(RawTriple, bool)>> {
    let mut out = Vec::new();
    for (idx, line) in text.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let err = |message: String| Error::Parse {
            path: source.to_string(),
            line: idx + 1,
            message,
        };
        if fields.len() != 4 {
            return Err(err(format!(
                "expected 4 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let label = match fields[3].trim() {
            "1" | "+1" | "true" => true,
            "-1" | "0" | "false" => false,
            other => return Err(err(format!("bad label `{other}`"))),
        };
        out.push((RawTriple::new(fields[0], fields[1], fields[2]), label));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(source.to_string()));
    }
    Ok(out)
}

pub fn load_labeled_triples(path: impl AsRef<Path>) -> Result<Vec<(RawTriple, bool)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labeled_triples(&text, &path.display().to_string())
}

pub fn write_triples(path: impl AsRef<Path>, triples: &[RawTriple]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    for t in triples {
        buf.push_str(&t.head);
        buf.push('\t');
        buf.push_str(&t.relation);
        buf.push('\t');
        buf.push_str(&t.tail);
        buf.push('\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(buf.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Dense, first-appearance-ordered string interner.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary::new();
        for n in names {
            let n = n.into();
            if v.index.contains_key(&n) {
                return Err(Error::Vocabulary(format!("duplicate name `{n}`")));
            }
            v.intern(&n);
        }
        Ok(v)
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// An outgoing edge stored in the adjacency lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub relation: RelationId,
    pub neighbor: EntityId,
}

/// Immutable, indexed knowledge graph.
#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Vocabulary,
    relations: Vocabulary,
    num_base_relations: usize,
    inverses: bool,
    triples: Vec<Triple>,
    adjacency: Vec<Vec<Edge>>,
    // sorted, deduplicated out-neighbor ids; answers "is x adjacent to y"
    neighbor_sets: Vec<Vec<EntityId>>,
    duplicates_dropped: usize,
}

impl KnowledgeGraph {
    /// Builds a graph whose vocabulary and edges both come from `triples`.
    pub fn build(triples: &[RawTriple], add_inverses: bool) -> Result<Self> {
        if triples.is_empty() {
            return Err(Error::EmptyInput("triple list".into()));
        }
        Self::build_with_vocabulary(&[triples], triples, add_inverses)
    }

    /// Builds a graph whose vocabulary covers every list in `vocab_sources`
    /// (interned in order) and whose edges come from `edge_triples` only.
    pub fn build_with_vocabulary(
        vocab_sources: &[&[RawTriple]],
        edge_triples: &[RawTriple],
        add_inverses: bool,
    ) -> Result<Self> {
        let mut entities = Vocabulary::new();
        let mut base = Vocabulary::new();
        for source in vocab_sources.iter().copied().chain(std::iter::once(edge_triples)) {
            for t in source {
                entities.intern(&t.head);
                base.intern(&t.relation);
                entities.intern(&t.tail);
            }
        }
        let num_base_relations = base.len();
        let mut relations = base.clone();
        if add_inverses {
            for name in base.names() {
                let inv = format!("{name}{INVERSE_SUFFIX}");
                if relations.get(&inv).is_some() {
                    return Err(Error::Vocabulary(format!(
                        "inverse relation name `{inv}` collides with an input relation"
                    )));
                }
                relations.intern(&inv);
            }
        }
        if relations.get(EOS_RELATION).is_some() {
            return Err(Error::Vocabulary(format!(
                "input relation uses reserved name `{EOS_RELATION}`"
            )));
        }
        relations.intern(EOS_RELATION);

        let mut seen = HashSet::new();
        let mut triples = Vec::with_capacity(edge_triples.len());
        let mut duplicates_dropped = 0;
        for t in edge_triples {
            let triple = Triple::new(
                entities.get(&t.head).expect("interned"),
                base.get(&t.relation).expect("interned"),
                entities.get(&t.tail).expect("interned"),
            );
            if seen.insert(triple) {
                triples.push(triple);
            } else {
                duplicates_dropped += 1;
            }
        }
        if duplicates_dropped > 0 {
            warn!("dropped {duplicates_dropped} duplicate triple(s)");
        }

        let mut adjacency = vec![Vec::new(); entities.len()];
        for t in &triples {
            adjacency[t.head as usize].push(Edge {
                relation: t.relation,
                neighbor: t.tail,
            });
        }
        if add_inverses {
            for t in &triples {
                adjacency[t.tail as usize].push(Edge {
                    relation: t.relation + num_base_relations as u32,
                    neighbor: t.head,
                });
            }
        }
        let neighbor_sets = adjacency
            .iter()
            .map(|edges| {
                let mut ns: Vec<EntityId> = edges.iter().map(|e| e.neighbor).collect();
                ns.sort_unstable();
                ns.dedup();
                ns
            })
            .collect();

        Ok(KnowledgeGraph {
            entities,
            relations,
            num_base_relations,
            inverses: add_inverses,
            triples,
            adjacency,
            neighbor_sets,
            duplicates_dropped,
        })
    }

    pub fn entities(&self) -> &Vocabulary {
        &self.entities
    }

    pub fn relations(&self) -> &Vocabulary {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Size of the full relation vocabulary, inverses and EOS included.
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_base_relations(&self) -> usize {
        self.num_base_relations
    }

    pub fn has_inverses(&self) -> bool {
        self.inverses
    }

    pub fn eos_relation(&self) -> RelationId {
        (self.relations.len() - 1) as RelationId
    }

    pub fn inverse_of(&self, relation: RelationId) -> Option<RelationId> {
        let n = self.num_base_relations as u32;
        if !self.inverses || relation >= 2 * n {
            None
        } else if relation < n {
            Some(relation + n)
        } else {
            Some(relation - n)
        }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    pub fn out_edges(&self, entity: EntityId) -> &[Edge] {
        &self.adjacency[entity as usize]
    }

    pub fn out_degree(&self, entity: EntityId) -> usize {
        self.adjacency[entity as usize].len()
    }

    /// Whether `to` is an out-neighbor of `from` through any relation.
    pub fn is_neighbor(&self, from: EntityId, to: EntityId) -> bool {
        self.neighbor_sets[from as usize].binary_search(&to).is_ok()
    }

    pub fn entity_id(&self, name: &str) -> Result<EntityId> {
        self.entities.get(name).ok_or_else(|| Error::UnknownToken {
            kind: "entity",
            name: name.to_string(),
        })
    }

    pub fn relation_id(&self, name: &str) -> Result<RelationId> {
        self.relations.get(name).ok_or_else(|| Error::UnknownToken {
            kind: "relation",
            name: name.to_string(),
        })
    }

    /// Maps surface triples onto ids. Relations must be base relations.
    pub fn encode(&self, raw: &[RawTriple]) -> Result<Vec<Triple>> {
        raw.iter()
            .map(|t| {
                let relation = self.relation_id(&t.relation)?;
                if relation as usize >= self.num_base_relations {
                    return Err(Error::Vocabulary(format!(
                        "`{}` is not an input relation",
                        t.relation
                    )));
                }
                Ok(Triple::new(
                    self.entity_id(&t.head)?,
                    relation,
                    self.entity_id(&t.tail)?,
                ))
            })
            .collect()
    }

    pub fn decode(&self, t: &Triple) -> RawTriple {
        RawTriple::new(
            self.entities.name(t.head),
            self.relations.name(t.relation),
            self.entities.name(t.tail),
        )
    }

    /// Stored triples as surface strings, in storage order.
    pub fn to_raw_triples(&self) -> Vec<RawTriple> {
        self.triples.iter().map(|t| self.decode(t)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Head,
    Tail,
}

/// Known-true answers for every `(?, r, t)` and `(h, r, ?)` query.
#[derive(Clone, Debug)]
pub struct FilterIndex {
    num_entities: usize,
    heads: HashMap<(RelationId, EntityId), Vec<EntityId>>,
    tails: HashMap<(EntityId, RelationId), Vec<EntityId>>,
}

impl FilterIndex {
    pub fn build<'a, I>(num_entities: usize, splits: I) -> Self
    where
        I: IntoIterator<Item = &'a [Triple]>,
    {
        let mut heads: HashMap<_, Vec<_>> = HashMap::new();
        let mut tails: HashMap<_, Vec<_>> = HashMap::new();
        for split in splits {
            for t in split {
                heads.entry((t.relation, t.tail)).or_default().push(t.head);
                tails.entry((t.head, t.relation)).or_default().push(t.tail);
            }
        }
        for v in heads.values_mut().chain(tails.values_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        FilterIndex {
            num_entities,
            heads,
            tails,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn known_heads(&self, relation: RelationId, tail: EntityId) -> &[EntityId] {
        self.heads
            .get(&(relation, tail))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn known_tails(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.tails
            .get(&(head, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Known answers for the query obtained by blanking `side` of `triple`.
    pub fn known(&self, triple: &Triple, side: Side) -> &[EntityId] {
        match side {
            Side::Head => self.known_heads(triple.relation, triple.tail),
            Side::Tail => self.known_tails(triple.head, triple.relation),
        }
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.known_tails(triple.head, triple.relation)
            .binary_search(&triple.tail)
            .is_ok()
    }

    /// Whether `candidate` is removed from the ranking of `triple`'s `side`.
    pub fn is_filtered(&self, triple: &Triple, side: Side, candidate: EntityId) -> bool {
        let target = match side {
            Side::Head => triple.head,
            Side::Tail => triple.tail,
        };
        candidate != target && self.known(triple, side).binary_search(&candidate).is_ok()
    }

    /// Ranking candidates for `triple`'s `side`, ascending by id.
    pub fn candidates(&self, triple: &Triple, side: Side) -> Vec<EntityId> {
        (0..self.num_entities as EntityId)
            .filter(|&c| !self.is_filtered(triple, side, c))
            .collect()
    }
}

/// Train/valid/test splits over one graph plus their shared filter index.
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub filter: FilterIndex,
}

impl DatasetSplit {
    pub fn all(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Builds the graph (vocabulary over all splits, edges from train only) and
/// the encoded splits with their filter index.
pub fn build_dataset(
    train: &[RawTriple],
    valid: &[RawTriple],
    test: &[RawTriple],
    add_inverses: bool,
) -> Result<(KnowledgeGraph, DatasetSplit)> {
    if train.is_empty() {
        return Err(Error::EmptyInput("train split".into()));
    }
    let graph = KnowledgeGraph::build_with_vocabulary(&[train, valid, test], train, add_inverses)?;
    let train_ids = graph.triples().to_vec();
    let valid_ids = dedup_split(graph.encode(valid)?, "valid");
    let test_ids = dedup_split(graph.encode(test)?, "test");

    let train_set: HashSet<_> = train_ids.iter().copied().collect();
    let valid_set: HashSet<_> = valid_ids.iter().copied().collect();
    for (name, other) in [("valid", &valid_ids), ("test", &test_ids)] {
        if let Some(t) = other.iter().find(|t| train_set.contains(t)) {
            return Err(Error::Vocabulary(format!(
                "{name} split shares triple {:?} with train",
                graph.decode(t)
            )));
        }
    }
    if let Some(t) = test_ids.iter().find(|t| valid_set.contains(t)) {
        return Err(Error::Vocabulary(format!(
            "test split shares triple {:?} with valid",
            graph.decode(t)
        )));
    }

    let filter = FilterIndex::build(
        graph.num_entities(),
        [train_ids.as_slice(), valid_ids.as_slice(), test_ids.as_slice()],
    );
    Ok((
        graph,
        DatasetSplit {
            train: train_ids,
            valid: valid_ids,
            test: test_ids,
            filter,
        },
    ))
}

fn dedup_split(triples: Vec<Triple>, name: &str) -> Vec<Triple> {
    let mut seen = HashSet::new();
    let before = triples.len();
    let out: Vec<_> = triples.into_iter().filter(|t| seen.insert(*t)).collect();
    if out.len() < before {
        warn!("dropped {} duplicate triple(s) from {name}", before - out.len());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(list: &[(&str, &str, &str)]) -> Vec<RawTriple> {
        list.iter().map(|&(h, r, t)| RawTriple::new(h, r, t)).collect()
    }

    #[test]
    fn parses_two_lines() {
        let t = parse_triples("a\tr1\tb\nb\tr2\tc\n", "mem").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1], RawTriple::new("b", "r2", "c"));
    }

    #[test]
    fn field_count_error_names_line() {
        let err = parse_triples("a\tr1\n", "mem").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_triples("a\tr\tb\nx\ty\tz\tw\n", "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_triples("\n\n", "mem"), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn surfaces_are_not_trimmed() {
        let t = parse_triples(" a\tr \tb\r\n", "mem").unwrap();
        assert_eq!(t[0], RawTriple::new(" a", "r ", "b"));
    }

    #[test]
    fn single_triple_with_inverses() {
        let g = KnowledgeGraph::build(&raw(&[("a", "r", "b")]), true).unwrap();
        let a = g.entity_id("a").unwrap();
        let b = g.entity_id("b").unwrap();
        let r = g.relation_id("r").unwrap();
        let r_inv = g.relation_id("r_inv").unwrap();
        assert_eq!(g.num_relations(), 3);
        assert_eq!(g.relations().name(g.eos_relation()), EOS_RELATION);
        assert_eq!(g.out_edges(a), &[Edge { relation: r, neighbor: b }]);
        assert_eq!(g.out_edges(b), &[Edge { relation: r_inv, neighbor: a }]);
        assert_eq!(g.inverse_of(r), Some(r_inv));
        assert_eq!(g.inverse_of(r_inv), Some(r));
        assert_eq!(g.inverse_of(g.eos_relation()), None);
    }

    #[test]
    fn single_triple_without_inverses() {
        let g = KnowledgeGraph::build(&raw(&[("a", "r", "b")]), false).unwrap();
        assert_eq!(g.num_relations(), 2);
        assert!(g.out_edges(g.entity_id("b").unwrap()).is_empty());
    }

    #[test]
    fn triangle_has_out_degree_two() {
        let g = KnowledgeGraph::build(&raw(&[("a", "r", "b"), ("b", "r", "c"), ("c", "r", "a")]), true)
            .unwrap();
        for e in 0..3 {
            assert_eq!(g.out_degree(e), 2);
        }
    }

    #[test]
    fn duplicates_are_dropped() {
        let g = KnowledgeGraph::build(&raw(&[("a", "r", "b"), ("a", "r", "b")]), true).unwrap();
        assert_eq!(g.triples().len(), 1);
        assert_eq!(g.duplicates_dropped(), 1);
    }

    #[test]
    fn reserved_and_colliding_names_are_rejected() {
        assert!(KnowledgeGraph::build(&raw(&[("a", "<eos>", "b")]), false).is_err());
        assert!(KnowledgeGraph::build(&raw(&[("a", "r", "b"), ("a", "r_inv", "c")]), true).is_err());
        assert!(KnowledgeGraph::build(&raw(&[("a", "r", "b"), ("a", "r_inv", "c")]), false).is_ok());
    }

    #[test]
    fn filter_keeps_target() {
        let (g, split) = build_dataset(&raw(&[("a", "r", "b")]), &raw(&[("c", "r", "c")]), &[], true)
            .unwrap();
        let (a, b, c) = (g.entity_id("a").unwrap(), g.entity_id("b").unwrap(), g.entity_id("c").unwrap());
        let q = Triple::new(a, 0, b);
        assert_eq!(split.filter.candidates(&q, Side::Head), vec![a, b, c]);
    }

    #[test]
    fn filter_removes_other_known_heads() {
        let (g, split) = build_dataset(
            &raw(&[("a", "r", "b"), ("c", "r", "b")]),
            &[],
            &[],
            true,
        )
        .unwrap();
        let (a, b, c) = (g.entity_id("a").unwrap(), g.entity_id("b").unwrap(), g.entity_id("c").unwrap());
        let q = Triple::new(a, 0, b);
        let mut cands = split.filter.candidates(&q, Side::Head);
        cands.sort();
        assert_eq!(cands, vec![a, b]);
        assert!(split.filter.is_filtered(&q, Side::Head, c));
    }

    #[test]
    fn vocabulary_spans_splits_but_edges_come_from_train() {
        let (g, split) = build_dataset(
            &raw(&[("a", "r", "b")]),
            &raw(&[("b", "s", "c")]),
            &raw(&[("d", "r", "a")]),
            true,
        )
        .unwrap();
        assert_eq!(g.num_entities(), 4);
        assert_eq!(g.num_base_relations(), 2);
        assert_eq!(g.triples().len(), 1);
        assert_eq!(split.valid.len(), 1);
        assert_eq!(g.out_degree(g.entity_id("d").unwrap()), 0);
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let t = raw(&[("a", "r", "b")]);
        assert!(build_dataset(&t, &t, &[], true).is_err());
        let v = raw(&[("b", "r", "a")]);
        assert!(build_dataset(&t, &v, &v, true).is_err());
    }

    #[test]
    fn labeled_lines_parse() {
        let t = parse_labeled_triples("a\tr\tb\t1\na\tr\tc\t-1\n", "mem").unwrap();
        assert_eq!(t.len(), 2);
        assert!(t[0].1 && !t[1].1);
        assert!(parse_labeled_triples("a\tr\tb\tmaybe\n", "mem").is_err());
    }
}
