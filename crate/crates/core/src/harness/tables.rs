//! Plot-ready tables derived from a metrics trace.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::sim::{MetricEvent, MetricsRecord};
use crate::Micros;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProgressRow {
    pub node: String,
    pub sim_time_us: Micros,
    pub chunks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RateRow {
    pub node: String,
    pub second: u64,
    pub chunks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RetxBlockRow {
    pub node: String,
    pub layer: &'static str,
    pub block_start: u32,
    pub block_end: u32,
    pub count: u64,
}

fn receptions(records: &[MetricsRecord]) -> BTreeMap<&str, Vec<Micros>> {
    let mut by_node: BTreeMap<&str, Vec<Micros>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.event == MetricEvent::DataRecv) {
        by_node.entry(&r.node).or_default().push(r.sim_time_us);
    }
    by_node
}

/// Cumulative stored-chunk count per node, one row per reception.
pub fn progress_table(records: &[MetricsRecord]) -> Vec<ProgressRow> {
    let mut rows = Vec::new();
    for (node, times) in receptions(records) {
        for (i, t) in times.into_iter().enumerate() {
            rows.push(ProgressRow {
                node: node.to_string(),
                sim_time_us: t,
                chunks: i as u64 + 1,
            });
        }
    }
    rows
}

/// Chunks stored per node and simulated second, dense up to the node's last reception.
pub fn rate_table(records: &[MetricsRecord]) -> Vec<RateRow> {
    let mut rows = Vec::new();
    for (node, times) in receptions(records) {
        let last = times.last().map_or(0, |t| t / 1_000_000);
        let mut counts = vec![0u64; last as usize + 1];
        for t in times {
            counts[(t / 1_000_000) as usize] += 1;
        }
        rows.extend(counts.into_iter().enumerate().map(|(s, c)| RateRow {
            node: node.to_string(),
            second: s as u64,
            chunks: c,
        }));
    }
    rows
}

const LAYERS: [(MetricEvent, &str); 3] = [
    (MetricEvent::LinkRetx, "link"),
    (MetricEvent::NetRetx, "network"),
    (MetricEvent::AppRetx, "application"),
];

/// Retransmissions per node, layer and block of `block_size` chunk indices.
///
/// `chunk_count` defaults to one past the largest chunk index in the trace.
/// Nodes are those that stored at least one chunk.
pub fn retx_blocks(
    records: &[MetricsRecord],
    block_size: u32,
    chunk_count: Option<u32>,
) -> Vec<RetxBlockRow> {
    let block_size = block_size.max(1);
    let count = chunk_count.unwrap_or_else(|| {
        records
            .iter()
            .filter_map(|r| r.chunk_id)
            .max()
            .map_or(0, |m| m + 1)
    });
    let blocks = count.div_ceil(block_size);
    let nodes = receptions(records);
    let mut tally: BTreeMap<(&str, usize, u32), u64> = BTreeMap::new();
    for r in records {
        let Some(layer) = LAYERS.iter().position(|(e, _)| *e == r.event) else {
            continue;
        };
        let Some(c) = r.chunk_id else { continue };
        if c < count {
            *tally
                .entry((r.node.as_str(), layer, c / block_size))
                .or_default() += 1;
        }
    }
    let mut rows = Vec::new();
    for node in nodes.keys() {
        for (li, (_, layer)) in LAYERS.iter().enumerate() {
            for b in 0..blocks {
                rows.push(RetxBlockRow {
                    node: node.to_string(),
                    layer,
                    block_start: b * block_size,
                    block_end: ((b + 1) * block_size).min(count) - 1,
                    count: tally.get(&(*node, li, b)).copied().unwrap_or(0),
                });
            }
        }
    }
    rows
}

/// Serialize table rows as CSV with a header.
pub fn table_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("writing to memory");
    }
    let bytes = w.into_inner().expect("flush to memory");
    String::from_utf8(bytes).expect("UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: Micros, node: &str, event: MetricEvent, chunk: Option<u32>) -> MetricsRecord {
        MetricsRecord {
            sim_time_us: t,
            node: node.into(),
            event,
            chunk_id: chunk,
            detail: String::new(),
        }
    }

    fn trace() -> Vec<MetricsRecord> {
        let mut v = Vec::new();
        for i in 0..250u32 {
            v.push(rec(i as u64 * 10_000, "a", MetricEvent::DataRecv, Some(i)));
            if i % 3 == 0 {
                v.push(rec(i as u64 * 10_000, "a", MetricEvent::LinkRetx, Some(i)));
            }
        }
        v.push(rec(3_000_000, "b", MetricEvent::DataRecv, Some(0)));
        v.push(rec(3_000_001, "b", MetricEvent::AppRetx, Some(0)));
        v.push(rec(3_000_002, "b", MetricEvent::PhaseChange, None));
        v
    }

    #[test]
    fn progress_ends_at_count() {
        let rows = progress_table(&trace());
        let last_a = rows.iter().rfind(|r| r.node == "a").unwrap();
        assert_eq!(last_a.chunks, 250);
        assert!(rows
            .windows(2)
            .all(|w| w[0].node != w[1].node || w[0].chunks < w[1].chunks));
    }

    #[test]
    fn rates_partition_receptions() {
        let t = trace();
        let total: u64 = rate_table(&t).iter().map(|r| r.chunks).sum();
        let recv = t
            .iter()
            .filter(|r| r.event == MetricEvent::DataRecv)
            .count() as u64;
        assert_eq!(total, recv);
    }

    #[test]
    fn retx_block_shape() {
        let rows = retx_blocks(&trace(), 100, Some(250));
        // 2 nodes x 3 layers x 3 blocks
        assert_eq!(rows.len(), 18);
        let link_a: u64 = rows
            .iter()
            .filter(|r| r.node == "a" && r.layer == "link")
            .map(|r| r.count)
            .sum();
        assert_eq!(link_a, 84);
        let last = rows
            .iter()
            .find(|r| r.node == "a" && r.block_start == 200)
            .unwrap();
        assert_eq!(last.block_end, 249);
        let app_b = rows
            .iter()
            .find(|r| r.node == "b" && r.layer == "application" && r.block_start == 0)
            .unwrap();
        assert_eq!(app_b.count, 1);
    }

    #[test]
    fn forty_blocks_for_four_thousand_chunks() {
        let t = vec![rec(0, "n", MetricEvent::DataRecv, Some(3_999))];
        let rows = retx_blocks(&t, 100, None);
        assert_eq!(rows.iter().filter(|r| r.layer == "network").count(), 40);
    }

    #[test]
    fn csv_has_header() {
        let s = table_csv(&rate_table(&trace()));
        assert!(s.starts_with("node,second,chunks\n"));
    }
}
