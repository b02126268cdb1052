use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricEvent {
    InterestSent,
    DataRecv,
    NetRetx,
    AppRetx,
    LinkRetx,
    TagFail,
    PhaseChange,
    InstallComplete,
    Abort,
}

impl MetricEvent {
    pub const ALL: [MetricEvent; 9] = [
        MetricEvent::InterestSent,
        MetricEvent::DataRecv,
        MetricEvent::NetRetx,
        MetricEvent::AppRetx,
        MetricEvent::LinkRetx,
        MetricEvent::TagFail,
        MetricEvent::PhaseChange,
        MetricEvent::InstallComplete,
        MetricEvent::Abort,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricEvent::InterestSent => "InterestSent",
            MetricEvent::DataRecv => "DataRecv",
            MetricEvent::NetRetx => "NetRetx",
            MetricEvent::AppRetx => "AppRetx",
            MetricEvent::LinkRetx => "LinkRetx",
            MetricEvent::TagFail => "TagFail",
            MetricEvent::PhaseChange => "PhaseChange",
            MetricEvent::InstallComplete => "InstallComplete",
            MetricEvent::Abort => "Abort",
        }
    }
}

impl fmt::Display for MetricEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricEvent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown event {s:?}"))
    }
}

/// One row of the per-event trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub sim_time_us: Micros,
    pub node: String,
    pub event: MetricEvent,
    pub chunk_id: Option<u32>,
    pub detail: String,
}

pub const CSV_HEADER: [&str; 5] = ["sim_time_us", "node", "event", "chunk_id", "detail"];

pub fn write_csv<W: io::Write>(records: &[MetricsRecord], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[MetricsRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is UTF-8")
}

#[derive(Debug, thiserror::Error)]
#[error("malformed metrics CSV: {0}")]
pub struct MalformedCsv(pub String);

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<MetricsRecord>, MalformedCsv> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = rd.headers().map_err(|e| MalformedCsv(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(MalformedCsv(format!(
            "expected header {}, got {}",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    let mut last = 0;
    for (i, row) in rd.deserialize::<MetricsRecord>().enumerate() {
        let r = row.map_err(|e| MalformedCsv(format!("row {}: {e}", i + 2)))?;
        if r.sim_time_us < last {
            return Err(MalformedCsv(format!("row {}: time goes backwards", i + 2)));
        }
        last = r.sim_time_us;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let recs = vec![
            MetricsRecord {
                sim_time_us: 5,
                node: "n1".into(),
                event: MetricEvent::DataRecv,
                chunk_id: Some(3),
                detail: "requested".into(),
            },
            MetricsRecord {
                sim_time_us: 9,
                node: "n2".into(),
                event: MetricEvent::PhaseChange,
                chunk_id: None,
                detail: "Idle->AwaitManifest".into(),
            },
        ];
        let text = to_csv_string(&recs);
        assert!(text.starts_with("sim_time_us,node,event,chunk_id,detail\n"));
        assert!(text.contains("9,n2,PhaseChange,,Idle->AwaitManifest"));
        assert_eq!(read_csv(text.as_bytes()).unwrap(), recs);
    }

    #[test]
    fn empty_trace_is_header_only() {
        assert_eq!(
            to_csv_string(&[]),
            "sim_time_us,node,event,chunk_id,detail\n"
        );
        assert!(
            read_csv("sim_time_us,node,event,chunk_id,detail\n".as_bytes())
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let bad_event = "sim_time_us,node,event,chunk_id,detail\n1,n1,Nope,,x\n";
        assert!(read_csv(bad_event.as_bytes()).is_err());
        let backwards =
            "sim_time_us,node,event,chunk_id,detail\n5,n1,DataRecv,1,x\n4,n1,DataRecv,2,x\n";
        assert!(read_csv(backwards.as_bytes()).is_err());
    }
}
