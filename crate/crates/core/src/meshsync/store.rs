use std::collections::BTreeMap;
use std::fmt::Write as _;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;

use super::{check_name, MeshError, NodeId, Record, RecordKey};

/// Highest contiguous seq held per `(origin, stream)`.
pub type Digest = BTreeMap<(NodeId, String), u64>;

/// Inclusive run of seqs on one `(origin, stream)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct KeyRange {
    pub origin: NodeId,
    pub stream: String,
    pub first: u64,
    pub last: u64,
}

impl KeyRange {
    pub fn len(&self) -> u64 {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        self.last < self.first
    }

    pub fn keys(&self) -> impl Iterator<Item = RecordKey> + '_ {
        (self.first..=self.last).map(|seq| RecordKey {
            origin: self.origin.clone(),
            stream: self.stream.clone(),
            seq,
        })
    }
}

/// Keys covered by `local`'s prefixes that `remote` lacks.
pub fn diff(local: &Digest, remote: &Digest) -> Vec<KeyRange> {
    local
        .iter()
        .filter_map(|((origin, stream), &have)| {
            let theirs = remote.get(&(origin.clone(), stream.clone())).copied().unwrap_or(0);
            (have > theirs).then(|| KeyRange {
                origin: origin.clone(),
                stream: stream.clone(),
                first: theirs + 1,
                last: have,
            })
        })
        .collect()
}

/// One node's database. Records are immutable once held.
#[derive(Debug, Clone, PartialEq)]
pub struct Store {
    node: NodeId,
    streams: BTreeMap<(NodeId, String), BTreeMap<u64, Record>>,
}

impl Store {
    pub fn new(node: impl Into<NodeId>) -> Self {
        Store {
            node: node.into(),
            streams: BTreeMap::new(),
        }
    }

    pub fn node(&self) -> &str {
        &self.node
    }

    /// Appends to one of this node's own streams. Purely local.
    pub fn put_local(
        &mut self,
        stream: &str,
        payload: Vec<u8>,
        created_at: f64,
    ) -> Result<RecordKey, MeshError> {
        check_name(stream)?;
        check_name(&self.node)?;
        let entry = self.streams.entry((self.node.clone(), stream.to_string())).or_default();
        let seq = entry.keys().next_back().map_or(1, |s| s + 1);
        let key = RecordKey {
            origin: self.node.clone(),
            stream: stream.to_string(),
            seq,
        };
        entry.insert(
            seq,
            Record {
                key: key.clone(),
                payload,
                created_at,
            },
        );
        Ok(key)
    }

    pub fn digest(&self) -> Digest {
        self.streams
            .iter()
            .filter_map(|(k, recs)| {
                let mut top = 0;
                for &s in recs.keys() {
                    if s != top + 1 {
                        break;
                    }
                    top = s;
                }
                (top > 0).then(|| (k.clone(), top))
            })
            .collect()
    }

    pub fn get(&self, key: &RecordKey) -> Option<&Record> {
        self.streams
            .get(&(key.origin.clone(), key.stream.clone()))
            .and_then(|m| m.get(&key.seq))
    }

    pub fn contains(&self, key: &RecordKey) -> bool {
        self.get(key).is_some()
    }

    /// Stores a copy of a record received from a peer. Returns false when
    /// the key was already held; the held copy is never replaced.
    pub fn insert(&mut self, record: Record) -> bool {
        let slot = self
            .streams
            .entry((record.key.origin.clone(), record.key.stream.clone()))
            .or_default();
        if slot.contains_key(&record.key.seq) {
            return false;
        }
        slot.insert(record.key.seq, record);
        true
    }

    /// All records in `(origin, stream, seq)` order.
    pub fn records(&self) -> impl Iterator<Item = &Record> {
        self.streams.values().flat_map(|m| m.values())
    }

    /// Records of one stream across every origin.
    pub fn stream(&self, stream: &str) -> impl Iterator<Item = &Record> + '_ {
        let stream = stream.to_string();
        self.streams
            .iter()
            .filter(move |((_, s), _)| *s == stream)
            .flat_map(|(_, m)| m.values())
    }

    pub fn len(&self) -> usize {
        self.streams.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Newline-delimited, tab-separated `origin stream seq created_at
    /// base64(payload)`, sorted by key.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.key.origin,
                r.key.stream,
                r.key.seq,
                r.created_at,
                STANDARD.encode(&r.payload)
            )
            .unwrap();
        }
        out
    }

    pub fn load(node: impl Into<NodeId>, text: &str) -> Result<Self, MeshError> {
        let mut store = Store::new(node);
        for (i, line) in text.lines().enumerate() {
            let err = |message: String| MeshError::Parse { line: i + 1, message };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", f.len())));
            }
            check_name(f[0]).map_err(|e| err(e.to_string()))?;
            check_name(f[1]).map_err(|e| err(e.to_string()))?;
            let seq: u64 = f[2].parse().map_err(|_| err(format!("bad seq {:?}", f[2])))?;
            if seq == 0 {
                return Err(err("seq starts at 1".into()));
            }
            let created_at: f64 = f[3]
                .parse()
                .map_err(|_| err(format!("bad timestamp {:?}", f[3])))?;
            let payload = STANDARD
                .decode(f[4])
                .map_err(|e| err(format!("bad payload: {e}")))?;
            let rec = Record {
                key: RecordKey {
                    origin: f[0].to_string(),
                    stream: f[1].to_string(),
                    seq,
                },
                payload,
                created_at,
            };
            if !store.insert(rec) {
                return Err(err("duplicate key".into()));
            }
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn digest(entries: &[(&str, &str, u64)]) -> Digest {
        entries
            .iter()
            .map(|(o, s, n)| ((o.to_string(), s.to_string()), *n))
            .collect()
    }

    fn rec(origin: &str, stream: &str, seq: u64) -> Record {
        Record {
            key: RecordKey {
                origin: origin.into(),
                stream: stream.into(),
                seq,
            },
            payload: vec![seq as u8],
            created_at: seq as f64,
        }
    }

    #[test]
    fn put_assigns_per_stream_counters() {
        let mut s = Store::new("ugv1");
        assert_eq!(s.put_local("scorecard", vec![], 0.0).unwrap().seq, 1);
        assert_eq!(s.put_local("scorecard", vec![], 0.0).unwrap().seq, 2);
        assert_eq!(s.put_local("robot_pose", vec![], 0.0).unwrap().seq, 1);
        assert!(s.put_local("bad\tname", vec![], 0.0).is_err());
    }

    #[test]
    fn digest_reports_contiguous_prefix() {
        let mut s = Store::new("b");
        assert!(s.digest().is_empty());
        for q in 1..=3 {
            s.insert(rec("A", "x", q));
        }
        s.insert(rec("C", "x", 1));
        s.insert(rec("C", "x", 3));
        s.insert(rec("D", "x", 2));
        assert_eq!(s.digest(), digest(&[("A", "x", 3), ("C", "x", 1)]));
    }

    #[test]
    fn diff_examples() {
        assert_eq!(
            diff(&digest(&[("A", "s", 3)]), &digest(&[("A", "s", 1)])),
            vec![KeyRange {
                origin: "A".into(),
                stream: "s".into(),
                first: 2,
                last: 3
            }]
        );
        let d = digest(&[("A", "s", 2), ("B", "s", 1)]);
        assert!(diff(&d, &d).is_empty());
        let r = diff(&d, &digest(&[("A", "s", 2)]));
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].origin.as_str(), r[0].first, r[0].last), ("B", 1, 1));
        assert!(diff(&digest(&[("A", "s", 1)]), &digest(&[("A", "s", 4)])).is_empty());
    }

    #[test]
    fn held_records_are_never_replaced() {
        let mut s = Store::new("n");
        assert!(s.insert(rec("A", "x", 1)));
        let mut other = rec("A", "x", 1);
        other.payload = vec![9];
        assert!(!s.insert(other));
        assert_eq!(s.get(&rec("A", "x", 1).key).unwrap().payload, vec![1]);
    }

    #[test]
    fn dump_load_round_trip() {
        let mut s = Store::new("uav1");
        s.put_local("casualty_map", b"{\"x\":1.5}".to_vec(), 12.300000000000001).unwrap();
        s.put_local("casualty_map", vec![0, 255, 10, 9], 1e-7).unwrap();
        s.put_local("scorecard", vec![], 99.0).unwrap();
        s.insert(rec("ugv2", "robot_pose", 1));
        let text = s.dump();
        let back = Store::load("uav1", &text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.dump(), text);
        assert_eq!(back.clone().put_local("scorecard", vec![], 0.0).unwrap().seq, 2);
    }

    #[test]
    fn load_reports_line() {
        let e = Store::load("n", "a\tb\t1\t0\t\na\tb\tx\t0\t\n").unwrap_err();
        assert!(matches!(e, MeshError::Parse { line: 2, .. }));
        let e = Store::load("n", "a\tb\t1\t0\t!!\n").unwrap_err();
        assert!(matches!(e, MeshError::Parse { line: 1, .. }));
    }
}
