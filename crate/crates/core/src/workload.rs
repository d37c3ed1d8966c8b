//! Query-driven fragmentation support: element usage and affinity matrices
//! built from a query workload, greedy affinity grouping of record children,
//! and a storage-plus-transport cost evaluator over an allocation.

use crate::addressing::TagSchema;
use crate::cluster::Allocation;
use crate::error::{Error, Result};
use crate::fragmentation::Manifest;
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};

/// One query: the element types it touches and how often it runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub id: String,
    pub elements: BTreeSet<u32>,
    pub freq: f64,
}

/// The queries an installation is expected to serve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryWorkload {
    pub queries: Vec<Query>,
}

#[derive(Deserialize)]
struct WorkloadRow {
    id: String,
    elements: Vec<String>,
    freq: f64,
}

/// Reads the workload file format: a JSON list of
/// `{ "id": …, "elements": [tag names], "freq": … }`, resolving tag names
/// against the schema.
pub fn parse_workload(json: &str, schema: &TagSchema) -> Result<QueryWorkload> {
    let rows: Vec<WorkloadRow> = serde_json::from_str(json)?;
    let mut queries = Vec::with_capacity(rows.len());
    for row in rows {
        if !(row.freq > 0.0) {
            return Err(Error::Workload(format!(
                "query `{}` has non-positive frequency {}",
                row.id, row.freq
            )));
        }
        let mut elements = BTreeSet::new();
        for name in &row.elements {
            elements.insert(
                schema
                    .tag_type(name)
                    .ok_or_else(|| Error::UnknownElement(name.clone()))?,
            );
        }
        queries.push(Query {
            id: row.id,
            elements,
            freq: row.freq,
        });
    }
    Ok(QueryWorkload { queries })
}

/// Rows = queries, columns = element types; `used[q][e]` says whether query q
/// touches type e.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementUsageMatrix {
    pub query_ids: Vec<String>,
    pub freq: Vec<f64>,
    pub used: Vec<Vec<bool>>,
    pub n_types: usize,
}

/// Builds the usage matrix over the schema's full type range.
pub fn build_eum(w: &QueryWorkload, schema: &TagSchema) -> Result<ElementUsageMatrix> {
    let n_types = schema.len();
    let mut query_ids = Vec::with_capacity(w.queries.len());
    let mut freq = Vec::with_capacity(w.queries.len());
    let mut used = Vec::with_capacity(w.queries.len());
    for q in &w.queries {
        let mut row = vec![false; n_types];
        for &e in &q.elements {
            if e as usize >= n_types {
                return Err(Error::UnknownElement(format!("tag type {e}")));
            }
            row[e as usize] = true;
        }
        query_ids.push(q.id.clone());
        freq.push(q.freq);
        used.push(row);
    }
    Ok(ElementUsageMatrix {
        query_ids,
        freq,
        used,
        n_types,
    })
}

/// Symmetric co-access weights: `aff[i][j]` = total frequency of queries that
/// touch both types i and j (so the diagonal is each type's total usage).
#[derive(Debug, Clone, PartialEq)]
pub struct ElementAffinityMatrix {
    pub aff: Vec<Vec<f64>>,
}

impl ElementAffinityMatrix {
    pub fn n(&self) -> usize {
        self.aff.len()
    }

    pub fn at(&self, i: u32, j: u32) -> f64 {
        self.aff[i as usize][j as usize]
    }
}

pub fn build_eam(m: &ElementUsageMatrix) -> ElementAffinityMatrix {
    let n = m.n_types;
    let mut aff = vec![vec![0.0; n]; n];
    for (row, &f) in m.used.iter().zip(&m.freq) {
        for i in 0..n {
            if !row[i] {
                continue;
            }
            for j in 0..n {
                if row[j] {
                    aff[i][j] += f;
                }
            }
        }
    }
    ElementAffinityMatrix { aff }
}

/// Greedy agglomeration of record-child element types into `k` groups:
/// repeatedly merge the pair of groups with the highest summed cross
/// affinity. Ties fall to the smaller combined group, then the lower minimum
/// tag type, then the lexicographically smaller union, making the result
/// deterministic. Groups come back sorted by their smallest member.
pub fn affinity_grouping(
    a: &ElementAffinityMatrix,
    record_children: &[u32],
    k: usize,
) -> Result<Vec<Vec<u32>>> {
    let mut seen = BTreeSet::new();
    let members: Vec<u32> = record_children
        .iter()
        .copied()
        .filter(|t| seen.insert(*t))
        .collect();
    if k == 0 || k > members.len() {
        return Err(Error::InvalidGroupCount {
            requested: k,
            available: members.len(),
        });
    }
    for &t in &members {
        if t as usize >= a.n() {
            return Err(Error::UnknownElement(format!("tag type {t}")));
        }
    }
    let mut groups: Vec<Vec<u32>> = members.iter().map(|&t| vec![t]).collect();
    while groups.len() > k {
        let mut best: Option<(usize, usize)> = None;
        let mut best_key = (f64::NEG_INFINITY, usize::MAX, u32::MAX, Vec::new());
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let score: f64 = groups[i]
                    .iter()
                    .flat_map(|&x| groups[j].iter().map(move |&y| (x, y)))
                    .map(|(x, y)| a.at(x, y))
                    .sum();
                let combined = groups[i].len() + groups[j].len();
                let mut union: Vec<u32> =
                    groups[i].iter().chain(&groups[j]).copied().collect();
                union.sort_unstable();
                let key = (score, combined, union[0], union);
                let better = key.0 > best_key.0
                    || (key.0 == best_key.0
                        && (key.1 < best_key.1
                            || (key.1 == best_key.1
                                && (key.2 < best_key.2
                                    || (key.2 == best_key.2 && key.3 < best_key.3)))));
                if better {
                    best_key = key;
                    best = Some((i, j));
                }
            }
        }
        let (i, j) = best.expect("at least two groups remain");
        let absorbed = groups.remove(j);
        groups[i].extend(absorbed);
        groups[i].sort_unstable();
    }
    groups.sort_by_key(|g| g[0]);
    Ok(groups)
}

/// α: cost per byte scanned in place; β: cost per byte shipped between nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub storage_weight: f64,
    pub transport_weight: f64,
}

/// Total workload cost against one placement. A query scans every fragment
/// whose recorded tag types intersect its accessed types; when the scanned
/// fragments span several nodes, all touched bytes outside the node holding
/// the largest touched share are shipped.
pub fn total_query_cost(
    manifest: &Manifest,
    allocation: &Allocation,
    w: &QueryWorkload,
    params: &CostParams,
    fragment_bytes: &BTreeMap<String, u64>,
) -> Result<f64> {
    let mut total = 0.0;
    for q in &w.queries {
        let mut scanned = 0u64;
        let mut per_node: BTreeMap<usize, u64> = BTreeMap::new();
        for entry in &manifest.fragments {
            if !entry.tag_types.iter().any(|t| q.elements.contains(t)) {
                continue;
            }
            let node = *allocation
                .placement
                .get(&entry.fragment_id)
                .ok_or_else(|| Error::AllocationIncomplete(entry.fragment_id.clone()))?;
            let bytes = *fragment_bytes.get(&entry.fragment_id).ok_or_else(|| {
                Error::AllocationIncomplete(format!(
                    "{} (no byte size recorded)",
                    entry.fragment_id
                ))
            })?;
            scanned += bytes;
            *per_node.entry(node).or_insert(0) += bytes;
        }
        let shipped = if per_node.len() > 1 {
            scanned - per_node.values().copied().max().unwrap_or(0)
        } else {
            0
        };
        total += q.freq
            * (params.storage_weight * scanned as f64
                + params.transport_weight * shipped as f64);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragmentation::{FragmentEntry, Parameters};

    fn book_schema() -> TagSchema {
        TagSchema::from_tags(
            [
                "books",
                "book",
                "title",
                "ISBN",
                "authors",
                "author",
                "publisher",
                "year",
                "category",
                "price",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        )
        .unwrap()
    }

    fn two_query_workload() -> QueryWorkload {
        QueryWorkload {
            queries: vec![
                Query {
                    id: "q1".into(),
                    elements: [2u32, 9].into_iter().collect(),
                    freq: 10.0,
                },
                Query {
                    id: "q2".into(),
                    elements: [9u32, 7].into_iter().collect(),
                    freq: 5.0,
                },
            ],
        }
    }

    #[test]
    fn workload_json_resolves_names() {
        let schema = book_schema();
        let w = parse_workload(
            r#"[{"id":"q1","elements":["title","price"],"freq":10},
                {"id":"q2","elements":["price","year"],"freq":5}]"#,
            &schema,
        )
        .unwrap();
        assert_eq!(w, two_query_workload());

        assert!(matches!(
            parse_workload(r#"[{"id":"q","elements":["nosuch"],"freq":1}]"#, &schema),
            Err(Error::UnknownElement(_))
        ));
        assert!(matches!(
            parse_workload(r#"[{"id":"q","elements":["title"],"freq":0}]"#, &schema),
            Err(Error::Workload(_))
        ));
    }

    #[test]
    fn eum_rows_mark_used_types() {
        let schema = book_schema();
        let m = build_eum(&two_query_workload(), &schema).unwrap();
        assert_eq!(m.n_types, 10);
        assert_eq!(m.freq, [10.0, 5.0]);
        let ones: Vec<usize> = m.used[0]
            .iter()
            .enumerate()
            .filter_map(|(i, &u)| u.then_some(i))
            .collect();
        assert_eq!(ones, [2, 9]);

        let empty = build_eum(&QueryWorkload::default(), &schema).unwrap();
        assert!(empty.used.is_empty());

        let w = QueryWorkload {
            queries: vec![two_query_workload().queries[0].clone(); 2],
        };
        let m = build_eum(&w, &schema).unwrap();
        assert_eq!(m.used[0], m.used[1]);

        let bad = QueryWorkload {
            queries: vec![Query {
                id: "q".into(),
                elements: [99u32].into_iter().collect(),
                freq: 1.0,
            }],
        };
        assert!(matches!(
            build_eum(&bad, &schema),
            Err(Error::UnknownElement(_))
        ));
    }

    #[test]
    fn eam_sums_co_access_frequencies() {
        let schema = book_schema();
        let a = build_eam(&build_eum(&two_query_workload(), &schema).unwrap());
        assert_eq!(a.at(2, 9), 10.0);
        assert_eq!(a.at(9, 7), 5.0);
        assert_eq!(a.at(2, 7), 0.0);
        assert_eq!(a.at(9, 9), 15.0);
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(a.at(i, j), a.at(j, i));
                assert!(a.at(i, i) >= a.at(i, j));
                assert!(a.at(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn eam_single_query_single_element_is_diagonal_only() {
        let schema = book_schema();
        let w = QueryWorkload {
            queries: vec![Query {
                id: "q".into(),
                elements: [3u32].into_iter().collect(),
                freq: 4.0,
            }],
        };
        let a = build_eam(&build_eum(&w, &schema).unwrap());
        for i in 0..10u32 {
            for j in 0..10u32 {
                let expect = if i == 3 && j == 3 { 4.0 } else { 0.0 };
                assert_eq!(a.at(i, j), expect);
            }
        }
    }

    #[test]
    fn grouping_merges_strongest_affinity_first() {
        let schema = book_schema();
        let a = build_eam(&build_eum(&two_query_workload(), &schema).unwrap());
        let children = [2u32, 9, 7];
        assert_eq!(
            affinity_grouping(&a, &children, 2).unwrap(),
            vec![vec![2, 9], vec![7]]
        );
        assert_eq!(
            affinity_grouping(&a, &children, 3).unwrap(),
            vec![vec![2], vec![7], vec![9]]
        );
        assert_eq!(
            affinity_grouping(&a, &children, 1).unwrap(),
            vec![vec![2, 7, 9]]
        );
        assert!(matches!(
            affinity_grouping(&a, &children, 4),
            Err(Error::InvalidGroupCount { .. })
        ));
        assert!(matches!(
            affinity_grouping(&a, &children, 0),
            Err(Error::InvalidGroupCount { .. })
        ));
    }

    #[test]
    fn grouping_invariant_under_frequency_scaling() {
        let schema = book_schema();
        let mut w = two_query_workload();
        let a = build_eam(&build_eum(&w, &schema).unwrap());
        for q in &mut w.queries {
            q.freq *= 3.0;
        }
        let scaled = build_eam(&build_eum(&w, &schema).unwrap());
        for k in 1..=3 {
            assert_eq!(
                affinity_grouping(&a, &[2, 9, 7], k).unwrap(),
                affinity_grouping(&scaled, &[2, 9, 7], k).unwrap()
            );
        }
    }

    fn cost_fixture() -> (Manifest, Allocation, QueryWorkload, BTreeMap<String, u64>) {
        let entry = |id: &str, types: &[u32]| FragmentEntry {
            fragment_id: id.into(),
            file: format!("d.{id}.xml"),
            predicate: None,
            selector: None,
            range: None,
            flagged: false,
            tag_types: types.to_vec(),
        };
        let manifest = Manifest {
            origin: "d".into(),
            attr_name: "address".into(),
            schema: book_schema().tags().to_vec(),
            model: "horizontal".into(),
            parameters: Parameters::default(),
            fragments: vec![entry("f1", &[0, 1, 2]), entry("f2", &[0, 1, 7])],
            links: vec![],
        };
        let allocation = Allocation {
            node_count: 2,
            placement: [("f1".to_string(), 0), ("f2".to_string(), 1)]
                .into_iter()
                .collect(),
        };
        let w = QueryWorkload {
            queries: vec![Query {
                id: "q".into(),
                elements: [2u32, 7].into_iter().collect(),
                freq: 2.0,
            }],
        };
        let bytes = [("f1".to_string(), 100u64), ("f2".to_string(), 300u64)]
            .into_iter()
            .collect();
        (manifest, allocation, w, bytes)
    }

    #[test]
    fn cost_ships_everything_outside_largest_share() {
        let (manifest, allocation, w, bytes) = cost_fixture();
        let params = CostParams {
            storage_weight: 1.0,
            transport_weight: 1.0,
        };
        let cost = total_query_cost(&manifest, &allocation, &w, &params, &bytes).unwrap();
        assert_eq!(cost, 1000.0); // 2 · (400 scanned + 100 shipped)
    }

    #[test]
    fn cost_single_node_has_no_transport() {
        let (manifest, mut allocation, w, bytes) = cost_fixture();
        allocation.placement.insert("f2".into(), 0);
        let params = CostParams {
            storage_weight: 1.0,
            transport_weight: 1.0,
        };
        let cost = total_query_cost(&manifest, &allocation, &w, &params, &bytes).unwrap();
        assert_eq!(cost, 800.0);
    }

    #[test]
    fn cost_zero_weights_zero_cost() {
        let (manifest, allocation, w, bytes) = cost_fixture();
        let params = CostParams {
            storage_weight: 0.0,
            transport_weight: 0.0,
        };
        assert_eq!(
            total_query_cost(&manifest, &allocation, &w, &params, &bytes).unwrap(),
            0.0
        );
    }

    #[test]
    fn cost_requires_complete_allocation() {
        let (manifest, mut allocation, w, bytes) = cost_fixture();
        allocation.placement.remove("f2");
        let params = CostParams {
            storage_weight: 1.0,
            transport_weight: 1.0,
        };
        assert!(matches!(
            total_query_cost(&manifest, &allocation, &w, &params, &bytes),
            Err(Error::AllocationIncomplete(_))
        ));
    }

    #[test]
    fn cost_monotone_in_weights_and_frequency() {
        let (manifest, allocation, mut w, bytes) = cost_fixture();
        let base = total_query_cost(
            &manifest,
            &allocation,
            &w,
            &CostParams {
                storage_weight: 1.0,
                transport_weight: 1.0,
            },
            &bytes,
        )
        .unwrap();
        let heavier = total_query_cost(
            &manifest,
            &allocation,
            &w,
            &CostParams {
                storage_weight: 2.0,
                transport_weight: 1.0,
            },
            &bytes,
        )
        .unwrap();
        assert!(heavier > base);
        w.queries[0].freq *= 10.0;
        let busier = total_query_cost(
            &manifest,
            &allocation,
            &w,
            &CostParams {
                storage_weight: 1.0,
                transport_weight: 1.0,
            },
            &bytes,
        )
        .unwrap();
        assert!(busier > base);
    }
}
