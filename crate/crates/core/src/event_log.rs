//! Interaction-event data model, the `events.jsonl` / `labels.csv` formats and
//! validated ingestion.
//!
//! A query instance is one issuance of a query: a `SerpShown` event followed by
//! every event carrying the same `query_instance_id`. Events inside an instance
//! are ordered by `timestamp_ms`, ties broken by lexicographic `event_id`.
//! Instances are emitted ordered by first-event timestamp, then instance id.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    SerpShown,
    ProductImpression,
    Click,
    Swipe,
    CartAdd,
    FilterApply,
    SortApply,
    SerpExit,
}

impl EventType {
    pub fn requires_position(self) -> bool {
        matches!(self, EventType::ProductImpression | EventType::Click)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NetworkType {
    Wifi,
    FourG,
    ThreeG,
    TwoG,
    Other,
}

impl NetworkType {
    /// WiFi or LTE.
    pub fn is_good(self) -> bool {
        matches!(self, NetworkType::Wifi | NetworkType::FourG)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub event_id: String,
    pub query_instance_id: String,
    pub session_id: String,
    pub user_id: String,
    pub raw_query: String,
    pub event_type: EventType,
    pub timestamp_ms: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network_type: Option<NetworkType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_suggest: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_products_found: Option<u64>,
}

impl InteractionEvent {
    /// Checks the per-event field invariants. Returns a description of the
    /// first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.event_id.is_empty() {
            return Err("empty event_id".into());
        }
        if self.query_instance_id.is_empty() {
            return Err("empty query_instance_id".into());
        }
        if self.raw_query.trim().is_empty() {
            return Err("empty raw_query".into());
        }
        if self.timestamp_ms <= 0 {
            return Err(format!("non-positive timestamp {}", self.timestamp_ms));
        }
        match (self.event_type.requires_position(), self.position) {
            (true, None) => return Err(format!("{:?} without position", self.event_type)),
            (false, Some(_)) => return Err(format!("{:?} with position", self.event_type)),
            (true, Some(0)) => return Err("position must be >= 1".into()),
            _ => {}
        }
        let serp_fields = [
            self.network_type.is_some(),
            self.auto_suggest.is_some(),
            self.num_products_found.is_some(),
        ];
        if self.event_type == EventType::SerpShown {
            if serp_fields.iter().any(|present| !present) {
                return Err("SerpShown missing network_type/auto_suggest/num_products_found".into());
            }
        } else if serp_fields.iter().any(|present| *present) {
            return Err(format!("{:?} carries SerpShown-only fields", self.event_type));
        }
        Ok(())
    }

    fn sort_key(&self) -> (i64, &str) {
        (self.timestamp_ms, self.event_id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertLabel {
    pub rating: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryInstance {
    pub query_instance_id: String,
    pub normalized_query: String,
    pub events: Vec<InteractionEvent>,
}

impl QueryInstance {
    /// Builds an instance from its events, sorting them and enforcing the
    /// instance invariants (shared id, exactly one `SerpShown`, which comes
    /// first, unique event ids).
    pub fn from_events(mut events: Vec<InteractionEvent>) -> std::result::Result<Self, String> {
        let first = events.first().ok_or("instance has no events")?;
        let id = first.query_instance_id.clone();
        if events.iter().any(|e| e.query_instance_id != id) {
            return Err("events span several query_instance_ids".into());
        }
        events.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        if events.windows(2).any(|w| w[0].event_id == w[1].event_id) {
            return Err("duplicate event_id".into());
        }
        let serps = events.iter().filter(|e| e.event_type == EventType::SerpShown).count();
        if serps != 1 {
            return Err(format!("expected exactly one SerpShown, found {serps}"));
        }
        if events[0].event_type != EventType::SerpShown {
            return Err("SerpShown is not the first event".into());
        }
        let normalized_query = normalize_query(&events[0].raw_query).map_err(|e| e.to_string())?;
        Ok(QueryInstance {
            query_instance_id: id,
            normalized_query,
            events,
        })
    }

    pub fn serp(&self) -> &InteractionEvent {
        &self.events[0]
    }

    pub fn start_ms(&self) -> i64 {
        self.events[0].timestamp_ms
    }

    pub fn session_id(&self) -> &str {
        &self.events[0].session_id
    }
}

/// Lowercases, collapses whitespace runs to a single space and trims.
pub fn normalize_query(raw: &str) -> Result<String> {
    let normalized = raw
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ");
    if normalized.is_empty() {
        return Err(Error::InvalidQuery(raw.to_string()));
    }
    Ok(normalized)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub total_lines: usize,
    pub malformed_lines: usize,
    pub duplicate_events: usize,
    pub dropped_instances: usize,
    pub instances: usize,
    pub events: usize,
}

impl IngestStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    fn check_corrupt(&self) -> Result<()> {
        if self.malformed_lines * 2 > self.total_lines {
            return Err(Error::CorruptLog {
                malformed: self.malformed_lines,
                total: self.total_lines,
            });
        }
        Ok(())
    }
}

#[derive(Default)]
struct Grouper {
    groups: HashMap<String, Vec<InteractionEvent>>,
    tainted: HashSet<String>,
}

impl Grouper {
    fn push(&mut self, event: InteractionEvent) {
        self.groups
            .entry(event.query_instance_id.clone())
            .or_default()
            .push(event);
    }

    fn taint(&mut self, instance_id: String) {
        self.tainted.insert(instance_id);
    }

    fn finish(self, stats: &mut IngestStats) -> Vec<QueryInstance> {
        let Grouper { groups, mut tainted } = self;
        let mut instances = Vec::with_capacity(groups.len());
        // Instances that only had malformed events never made it into `groups`.
        for id in tainted.iter() {
            if !groups.contains_key(id) {
                stats.dropped_instances += 1;
            }
        }
        for (id, mut events) in groups {
            if tainted.remove(&id) {
                stats.dropped_instances += 1;
                continue;
            }
            // Stable sort keeps file order among equal ids, so the first
            // occurrence survives the dedup.
            events.sort_by(|a, b| a.event_id.cmp(&b.event_id));
            let before = events.len();
            events.dedup_by(|later, earlier| later.event_id == earlier.event_id);
            stats.duplicate_events += before - events.len();
            match QueryInstance::from_events(events) {
                Ok(instance) => instances.push(instance),
                Err(reason) => {
                    log::debug!("dropping instance {id}: {reason}");
                    stats.dropped_instances += 1;
                }
            }
        }
        instances.sort_by(|a, b| (a.start_ms(), &a.query_instance_id).cmp(&(b.start_ms(), &b.query_instance_id)));
        stats.instances += instances.len();
        stats.events += instances.iter().map(|i| i.events.len()).sum::<usize>();
        instances
    }
}

enum Line {
    Blank,
    Malformed(Option<String>),
    Event(InteractionEvent),
}

fn parse_line(line: &str) -> Line {
    if line.trim().is_empty() {
        return Line::Blank;
    }
    match serde_json::from_str::<InteractionEvent>(line) {
        Ok(event) => match event.validate() {
            Ok(()) => Line::Event(event),
            Err(reason) => {
                log::debug!("malformed event {}: {reason}", event.event_id);
                Line::Malformed(Some(event.query_instance_id))
            }
        },
        Err(_) => Line::Malformed(None),
    }
}

/// Reads `events.jsonl`, groups events into validated query instances.
///
/// Malformed lines are counted; an instance with any malformed event is
/// dropped. More than half the lines malformed yields [`Error::CorruptLog`].
pub fn ingest_events<R: BufRead>(reader: R) -> Result<(Vec<QueryInstance>, IngestStats)> {
    let mut stats = IngestStats::default();
    let mut grouper = Grouper::default();
    for line in reader.lines() {
        let line = line?;
        match parse_line(&line) {
            Line::Blank => continue,
            Line::Malformed(instance) => {
                stats.total_lines += 1;
                stats.malformed_lines += 1;
                if let Some(id) = instance {
                    grouper.taint(id);
                }
            }
            Line::Event(event) => {
                stats.total_lines += 1;
                grouper.push(event);
            }
        }
    }
    stats.check_corrupt()?;
    let instances = grouper.finish(&mut stats);
    Ok((instances, stats))
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn shard_of(instance_id: &str, shards: usize) -> usize {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in instance_id.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    (hash % shards as u64) as usize
}

/// Multi-pass ingestion that holds only one shard of instances in memory at a
/// time. `open` is called once per shard and must yield the same bytes each
/// time. Instances reach `sink` ordered within a shard, shard by shard.
pub fn ingest_events_sharded<R, F, S>(open: F, shards: usize, mut sink: S) -> Result<IngestStats>
where
    R: BufRead,
    F: Fn() -> std::io::Result<R>,
    S: FnMut(QueryInstance),
{
    let shards = shards.max(1);
    let mut stats = IngestStats::default();
    for shard in 0..shards {
        let mut grouper = Grouper::default();
        for line in open()?.lines() {
            let line = line?;
            let parsed = parse_line(&line);
            if shard == 0 {
                match &parsed {
                    Line::Blank => {}
                    Line::Malformed(_) => {
                        stats.total_lines += 1;
                        stats.malformed_lines += 1;
                    }
                    Line::Event(_) => stats.total_lines += 1,
                }
            }
            match parsed {
                Line::Malformed(Some(id)) if shard_of(&id, shards) == shard => grouper.taint(id),
                Line::Event(event) if shard_of(&event.query_instance_id, shards) == shard => grouper.push(event),
                _ => {}
            }
        }
        if shard == 0 {
            stats.check_corrupt()?;
        }
        for instance in grouper.finish(&mut stats) {
            sink(instance);
        }
    }
    Ok(stats)
}

/// Writes instances as `events.jsonl`, one event per line.
pub fn write_events<'a, W, I>(mut writer: W, instances: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a QueryInstance>,
{
    for instance in instances {
        for event in &instance.events {
            serde_json::to_writer(&mut writer, event)?;
            writer.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelStats {
    pub records: usize,
    pub rejected: usize,
    pub duplicate_warnings: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub labels: BTreeMap<String, ExpertLabel>,
    pub stats: LabelStats,
}

#[derive(Debug, Deserialize)]
struct LabelRecord {
    query: String,
    rating: String,
}

/// Reads `labels.csv` (`query,rating`). Out-of-range or unparsable ratings are
/// rejected and counted; a repeated query keeps the last rating.
pub fn ingest_labels<R: std::io::Read>(reader: R) -> Result<LabelSet> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut set = LabelSet::default();
    for record in csv.deserialize::<LabelRecord>() {
        set.stats.records += 1;
        let record = match record {
            Ok(r) => r,
            Err(err) => {
                if err.is_io_error() {
                    return Err(err.into());
                }
                set.stats.rejected += 1;
                continue;
            }
        };
        let rating = match record.rating.trim().parse::<i64>() {
            Ok(r) if (1..=5).contains(&r) => r as u8,
            _ => {
                set.stats.rejected += 1;
                continue;
            }
        };
        let Ok(query) = normalize_query(&record.query) else {
            set.stats.rejected += 1;
            continue;
        };
        if set.labels.insert(query.clone(), ExpertLabel { rating }).is_some() {
            warn!("duplicate label for {query:?}; keeping the last one");
            set.stats.duplicate_warnings += 1;
        }
    }
    Ok(set)
}

pub fn write_labels<W: Write>(writer: W, labels: &BTreeMap<String, ExpertLabel>) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["query", "rating"])?;
    for (query, label) in labels {
        csv.write_record([query.as_str(), &label.rating.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

/// Per normalized query, the number of instances.
pub fn query_counts<'a, I>(instances: I) -> BTreeMap<String, usize>
where
    I: IntoIterator<Item = &'a QueryInstance>,
{
    let mut counts = BTreeMap::new();
    for instance in instances {
        *counts.entry(instance.normalized_query.clone()).or_insert(0) += 1;
    }
    counts
}

/// Keeps instances whose query occurs strictly more than `min_count` times.
pub fn filter_by_volume(instances: Vec<QueryInstance>, min_count: usize) -> Vec<QueryInstance> {
    let counts = query_counts(&instances);
    instances
        .into_iter()
        .filter(|i| counts[&i.normalized_query] > min_count)
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub fn serp(instance: &str, event: &str, ts: i64, query: &str) -> InteractionEvent {
        InteractionEvent {
            event_id: event.into(),
            query_instance_id: instance.into(),
            session_id: "s1".into(),
            user_id: "u1".into(),
            raw_query: query.into(),
            event_type: EventType::SerpShown,
            timestamp_ms: ts,
            position: None,
            product_id: None,
            network_type: Some(NetworkType::Wifi),
            auto_suggest: Some(false),
            num_products_found: Some(10),
        }
    }

    pub fn event(instance: &str, event: &str, ts: i64, kind: EventType) -> InteractionEvent {
        InteractionEvent {
            event_id: event.into(),
            query_instance_id: instance.into(),
            session_id: "s1".into(),
            user_id: "u1".into(),
            raw_query: "q".into(),
            event_type: kind,
            timestamp_ms: ts,
            position: kind.requires_position().then_some(1),
            product_id: None,
            network_type: None,
            auto_suggest: None,
            num_products_found: None,
        }
    }

    fn to_jsonl(events: &[InteractionEvent]) -> String {
        events
            .iter()
            .map(|e| serde_json::to_string(e).unwrap() + "\n")
            .collect()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_query("  Sling Bags  WOMEN ").unwrap(), "sling bags women");
        assert_eq!(normalize_query("iphone x").unwrap(), "iphone x");
        assert!(matches!(normalize_query("\t\n"), Err(Error::InvalidQuery(_))));
    }

    #[test]
    fn groups_three_events_into_one_instance() {
        let log = to_jsonl(&[
            serp("i1", "e1", 1000, "Red Shoes"),
            event("i1", "e2", 1500, EventType::Click),
            event("i1", "e3", 2000, EventType::SerpExit),
        ]);
        let (instances, stats) = ingest_events(log.as_bytes()).unwrap();
        assert_eq!(instances.len(), 1);
        assert_eq!(instances[0].events.len(), 3);
        assert_eq!(instances[0].normalized_query, "red shoes");
        assert_eq!(stats.dropped_instances, 0);
    }

    #[test]
    fn instance_without_serp_is_dropped() {
        let log = to_jsonl(&[serp("i1", "e1", 1000, "a"), event("i2", "e2", 1500, EventType::Click)]);
        let (instances, stats) = ingest_events(log.as_bytes()).unwrap();
        assert_eq!(instances.len(), 1);
        assert_eq!(stats.dropped_instances, 1);
    }

    #[test]
    fn duplicate_event_id_is_dropped_and_counted() {
        let mut dup = event("i1", "e2", 1800, EventType::Swipe);
        dup.event_type = EventType::Swipe;
        let log = to_jsonl(&[
            serp("i1", "e1", 1000, "a"),
            event("i1", "e2", 1500, EventType::Click),
            dup,
        ]);
        let (instances, stats) = ingest_events(log.as_bytes()).unwrap();
        assert_eq!(stats.duplicate_events, 1);
        assert_eq!(instances[0].events.len(), 2);
        assert_eq!(instances[0].events[1].event_type, EventType::Click);
    }

    #[test]
    fn malformed_field_drops_whole_instance() {
        let mut bad = event("i1", "e2", 1500, EventType::Click);
        bad.position = None;
        let log = to_jsonl(&[
            serp("i1", "e1", 1000, "a"),
            bad,
            serp("i2", "e3", 1000, "b"),
            event("i2", "e4", 1200, EventType::Swipe),
        ]);
        let (instances, stats) = ingest_events(log.as_bytes()).unwrap();
        assert_eq!(instances.len(), 1);
        assert_eq!(instances[0].query_instance_id, "i2");
        assert_eq!(stats.malformed_lines, 1);
        assert_eq!(stats.dropped_instances, 1);
    }

    #[test]
    fn mostly_garbage_is_corrupt() {
        let log = format!("{}not json\n{{}}\n", to_jsonl(&[serp("i1", "e1", 1000, "a")]));
        assert!(matches!(
            ingest_events(log.as_bytes()),
            Err(Error::CorruptLog { malformed: 2, total: 3 })
        ));
    }

    #[test]
    fn equal_timestamps_tie_break_on_event_id() {
        let log = to_jsonl(&[
            serp("i1", "a0", 1000, "a"),
            event("i1", "e9", 1500, EventType::Swipe),
            event("i1", "e1", 1500, EventType::Click),
        ]);
        let (instances, _) = ingest_events(log.as_bytes()).unwrap();
        let ids: Vec<_> = instances[0].events.iter().map(|e| e.event_id.as_str()).collect();
        assert_eq!(ids, ["a0", "e1", "e9"]);
    }

    #[test]
    fn serp_specific_fields_rejected_elsewhere() {
        let mut e = event("i1", "e2", 10, EventType::Swipe);
        e.auto_suggest = Some(true);
        assert!(e.validate().is_err());
        let mut s = serp("i1", "e1", 10, "a");
        s.num_products_found = None;
        assert!(s.validate().is_err());
        let mut z = event("i1", "e3", 10, EventType::Click);
        z.position = Some(0);
        assert!(z.validate().is_err());
        assert!(event("i1", "e4", 0, EventType::Swipe).validate().is_err());
    }

    #[test]
    fn optional_fields_are_omitted() {
        let line = serde_json::to_string(&event("i1", "e2", 10, EventType::Swipe)).unwrap();
        assert!(!line.contains("position"));
        assert!(!line.contains("network_type"));
        assert!(line.contains("\"event_type\":\"Swipe\""));
    }

    #[test]
    fn labels_validation() {
        let csv = "query,rating\nred shoes,4\nblue shoes,9\n\"a\",2\nA,5\nx,abc\n";
        let set = ingest_labels(csv.as_bytes()).unwrap();
        assert_eq!(set.labels["red shoes"].rating, 4);
        assert!(!set.labels.contains_key("blue shoes"));
        assert_eq!(set.labels["a"].rating, 5);
        assert_eq!(set.stats.duplicate_warnings, 1);
        assert_eq!(set.stats.rejected, 2);
    }

    fn instances_for(query: &str, n: usize) -> Vec<QueryInstance> {
        (0..n)
            .map(|i| {
                let id = format!("{query}-{i}");
                QueryInstance::from_events(vec![serp(&id, &format!("{id}-e"), 1 + i as i64, query)]).unwrap()
            })
            .collect()
    }

    #[test]
    fn volume_filter_is_strict() {
        let mut all = instances_for("a", 100);
        all.extend(instances_for("b", 101));
        let kept = filter_by_volume(all, 100);
        assert_eq!(kept.len(), 101);
        assert!(kept.iter().all(|i| i.normalized_query == "b"));
        assert_eq!(filter_by_volume(instances_for("c", 2), 1).len(), 2);
    }

    #[test]
    fn sharded_matches_single_pass() {
        let mut events = Vec::new();
        for i in 0..40 {
            let id = format!("i{i}");
            events.push(serp(
                &id,
                &format!("{id}a"),
                1000 + (i % 7) as i64,
                &format!("q{}", i % 5),
            ));
            events.push(event(&id, &format!("{id}b"), 2000, EventType::Click));
        }
        events.push(event("orphan", "o1", 5, EventType::Swipe));
        let log = to_jsonl(&events);
        let (single, single_stats) = ingest_events(log.as_bytes()).unwrap();
        let mut sharded = Vec::new();
        let stats = ingest_events_sharded(|| Ok(log.as_bytes()), 3, |i| sharded.push(i)).unwrap();
        sharded.sort_by(|a, b| (a.start_ms(), &a.query_instance_id).cmp(&(b.start_ms(), &b.query_instance_id)));
        assert_eq!(single, sharded);
        assert_eq!(single_stats, stats);
    }

    fn arb_event_type() -> impl Strategy<Value = EventType> {
        prop_oneof![
            Just(EventType::ProductImpression),
            Just(EventType::Click),
            Just(EventType::Swipe),
            Just(EventType::CartAdd),
            Just(EventType::FilterApply),
            Just(EventType::SortApply),
            Just(EventType::SerpExit),
        ]
    }

    fn arb_instance(idx: usize) -> impl Strategy<Value = QueryInstance> {
        (
            1i64..1_000_000,
            "[a-z]{1,6}( [a-z]{1,6}){0,2}",
            prop::collection::vec((arb_event_type(), 0i64..10_000, 1u32..50), 0..8),
            prop::bool::ANY,
        )
            .prop_map(move |(start, query, rest, suggest)| {
                let id = format!("qi{idx}");
                let mut s = serp(&id, &format!("{id}-0"), start, &query);
                s.auto_suggest = Some(suggest);
                let mut events = vec![s];
                for (k, (kind, offset, pos)) in rest.into_iter().enumerate() {
                    let mut e = event(&id, &format!("{id}-{}", k + 1), start + offset, kind);
                    if kind.requires_position() {
                        e.position = Some(pos);
                    }
                    e.product_id = (kind == EventType::Click).then(|| format!("p{pos}"));
                    events.push(e);
                }
                QueryInstance::from_events(events).unwrap()
            })
    }

    proptest! {
        #[test]
        fn serialize_ingest_round_trip(
            instances in (0usize..6).prop_flat_map(|n| {
                (0..n).map(arb_instance).collect::<Vec<_>>()
            })
        ) {
            let mut instances = instances;
            instances.sort_by(|a, b| {
                (a.start_ms(), &a.query_instance_id).cmp(&(b.start_ms(), &b.query_instance_id))
            });
            let mut buf = Vec::new();
            write_events(&mut buf, &instances).unwrap();
            let (back, stats) = ingest_events(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &instances);
            prop_assert_eq!(stats.dropped_instances, 0);
            for instance in &back {
                prop_assert!(instance.events.windows(2).all(|w| w[0].timestamp_ms <= w[1].timestamp_ms));
            }
            let (again, _) = ingest_events(buf.as_slice()).unwrap();
            prop_assert_eq!(back, again);
        }

        #[test]
        fn normalize_is_idempotent(raw in "[ \\tA-Za-z0-9]{0,20}") {
            if let Ok(once) = normalize_query(&raw) {
                prop_assert_eq!(normalize_query(&once).unwrap(), once);
            }
        }
    }
}
