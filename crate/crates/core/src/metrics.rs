//! Per-instance behavioral metrics and their per-query aggregates.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{EventType, QueryInstance};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryInstanceMetrics {
    pub time_to_first_click_ms: Option<u64>,
    pub time_to_first_cart_ms: Option<u64>,
    pub query_duration_ms: u64,
    pub pos_first_click: Option<u32>,
    pub num_clicks: u32,
    pub num_swipes: u32,
    pub num_carts: u32,
    pub num_filters: u32,
    pub num_sorts: u32,
    pub num_impressions: u32,
    pub click_success: bool,
    pub cart_success: bool,
    pub is_auto_suggest: bool,
    pub is_good_network: bool,
    pub num_products_found: u64,
}

pub fn extract_instance_metrics(instance: &QueryInstance) -> QueryInstanceMetrics {
    let serp = instance.serp();
    let start = serp.timestamp_ms;
    let elapsed = |ts: i64| (ts - start).max(0) as u64;

    let mut m = QueryInstanceMetrics {
        time_to_first_click_ms: None,
        time_to_first_cart_ms: None,
        query_duration_ms: 0,
        pos_first_click: None,
        num_clicks: 0,
        num_swipes: 0,
        num_carts: 0,
        num_filters: 0,
        num_sorts: 0,
        num_impressions: 0,
        click_success: false,
        cart_success: false,
        is_auto_suggest: serp.auto_suggest.unwrap_or(false),
        is_good_network: serp.network_type.is_some_and(|n| n.is_good()),
        num_products_found: serp.num_products_found.unwrap_or(0),
    };
    for event in &instance.events[1..] {
        match event.event_type {
            EventType::Click => {
                if m.num_clicks == 0 {
                    m.time_to_first_click_ms = Some(elapsed(event.timestamp_ms));
                    m.pos_first_click = event.position;
                }
                m.num_clicks += 1;
            }
            EventType::CartAdd => {
                if m.num_carts == 0 {
                    m.time_to_first_cart_ms = Some(elapsed(event.timestamp_ms));
                }
                m.num_carts += 1;
            }
            EventType::Swipe => m.num_swipes += 1,
            EventType::FilterApply => m.num_filters += 1,
            EventType::SortApply => m.num_sorts += 1,
            EventType::ProductImpression => m.num_impressions += 1,
            EventType::SerpShown | EventType::SerpExit => {}
        }
    }
    m.query_duration_ms = instance.events.last().map_or(0, |last| elapsed(last.timestamp_ms));
    m.click_success = m.num_clicks > 0;
    m.cart_success = m.num_carts > 0;
    m
}

/// Numeric per-instance metrics that are summarised with [`AggregateStats`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericMetric {
    TimeToFirstClick,
    TimeToFirstCart,
    QueryDuration,
    PosFirstClick,
    NumClicks,
    NumSwipes,
    NumCarts,
    NumFilters,
    NumSorts,
    NumImpressions,
    NumProductsFound,
}

impl NumericMetric {
    pub const ALL: [NumericMetric; 11] = [
        NumericMetric::TimeToFirstClick,
        NumericMetric::TimeToFirstCart,
        NumericMetric::QueryDuration,
        NumericMetric::PosFirstClick,
        NumericMetric::NumClicks,
        NumericMetric::NumSwipes,
        NumericMetric::NumCarts,
        NumericMetric::NumFilters,
        NumericMetric::NumSorts,
        NumericMetric::NumImpressions,
        NumericMetric::NumProductsFound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NumericMetric::TimeToFirstClick => "time_to_first_click",
            NumericMetric::TimeToFirstCart => "time_to_first_cart",
            NumericMetric::QueryDuration => "query_duration",
            NumericMetric::PosFirstClick => "pos_first_click",
            NumericMetric::NumClicks => "num_clicks",
            NumericMetric::NumSwipes => "num_swipes",
            NumericMetric::NumCarts => "num_carts",
            NumericMetric::NumFilters => "num_filters",
            NumericMetric::NumSorts => "num_sorts",
            NumericMetric::NumImpressions => "num_impressions",
            NumericMetric::NumProductsFound => "num_products_found",
        }
    }

    pub fn value(self, m: &QueryInstanceMetrics) -> Option<f64> {
        match self {
            NumericMetric::TimeToFirstClick => m.time_to_first_click_ms.map(|v| v as f64),
            NumericMetric::TimeToFirstCart => m.time_to_first_cart_ms.map(|v| v as f64),
            NumericMetric::QueryDuration => Some(m.query_duration_ms as f64),
            NumericMetric::PosFirstClick => m.pos_first_click.map(f64::from),
            NumericMetric::NumClicks => Some(f64::from(m.num_clicks)),
            NumericMetric::NumSwipes => Some(f64::from(m.num_swipes)),
            NumericMetric::NumCarts => Some(f64::from(m.num_carts)),
            NumericMetric::NumFilters => Some(f64::from(m.num_filters)),
            NumericMetric::NumSorts => Some(f64::from(m.num_sorts)),
            NumericMetric::NumImpressions => Some(f64::from(m.num_impressions)),
            NumericMetric::NumProductsFound => Some(m.num_products_found as f64),
        }
    }
}

/// Per-query success rates over instance flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMetric {
    ClickSuccess,
    CartSuccess,
    AutoSuggest,
    GoodNetwork,
}

impl RateMetric {
    pub const ALL: [RateMetric; 4] = [
        RateMetric::ClickSuccess,
        RateMetric::CartSuccess,
        RateMetric::AutoSuggest,
        RateMetric::GoodNetwork,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RateMetric::ClickSuccess => "click_success_rate",
            RateMetric::CartSuccess => "cart_success_rate",
            RateMetric::AutoSuggest => "auto_suggest_rate",
            RateMetric::GoodNetwork => "good_network_rate",
        }
    }

    pub fn flag(self, m: &QueryInstanceMetrics) -> bool {
        match self {
            RateMetric::ClickSuccess => m.click_success,
            RateMetric::CartSuccess => m.cart_success,
            RateMetric::AutoSuggest => m.is_auto_suggest,
            RateMetric::GoodNetwork => m.is_good_network,
        }
    }
}

/// Mean, median, population standard deviation and inter-quartile range.
/// Every statistic is `None` when `n == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateStats {
    pub n: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub std: Option<f64>,
    pub iqr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Mean,
    Median,
    Std,
    Iqr,
}

impl Stat {
    pub const ALL: [Stat; 4] = [Stat::Mean, Stat::Median, Stat::Std, Stat::Iqr];

    pub fn name(self) -> &'static str {
        match self {
            Stat::Mean => "mean",
            Stat::Median => "median",
            Stat::Std => "std",
            Stat::Iqr => "iqr",
        }
    }
}

impl AggregateStats {
    pub fn get(&self, stat: Stat) -> Option<f64> {
        match stat {
            Stat::Mean => self.mean,
            Stat::Median => self.median,
            Stat::Std => self.std,
            Stat::Iqr => self.iqr,
        }
    }
}

/// Quantile of already sorted values by linear interpolation between order
/// statistics (Hyndman-Fan type 7). `sorted` must be non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn aggregate_stats(values: &[f64]) -> Result<AggregateStats> {
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidValue(format!("non-finite input {bad}")));
    }
    if values.is_empty() {
        return Ok(AggregateStats::default());
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Summing in sorted order makes the result independent of input order.
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let mean = if lo == hi {
        lo
    } else {
        sorted.iter().sum::<f64>() / n as f64
    };
    let var = if lo == hi {
        0.0
    } else {
        sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
    };
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    Ok(AggregateStats {
        n,
        mean: Some(mean),
        median: Some(quantile_sorted(&sorted, 0.5)),
        std: Some(var.sqrt()),
        iqr: Some(iqr.max(0.0)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAggregate {
    pub normalized_query: String,
    pub query_count: usize,
    pub stats: BTreeMap<NumericMetric, AggregateStats>,
    pub rates: BTreeMap<RateMetric, f64>,
}

impl QueryAggregate {
    pub fn stat(&self, metric: NumericMetric) -> &AggregateStats {
        &self.stats[&metric]
    }

    pub fn rate(&self, rate: RateMetric) -> f64 {
        self.rates[&rate]
    }

    pub fn click_success_rate(&self) -> f64 {
        self.rate(RateMetric::ClickSuccess)
    }
}

/// Aggregates the instances of one query. Optional metrics only use the
/// instances where they are present.
pub fn aggregate_query(query: &str, instances: &[QueryInstanceMetrics]) -> Result<QueryAggregate> {
    if instances.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    let mut stats = BTreeMap::new();
    let mut values = Vec::with_capacity(instances.len());
    for metric in NumericMetric::ALL {
        values.clear();
        values.extend(instances.iter().filter_map(|m| metric.value(m)));
        stats.insert(metric, aggregate_stats(&values)?);
    }
    let n = instances.len() as f64;
    let rates = RateMetric::ALL
        .into_iter()
        .map(|rate| {
            let hits = instances.iter().filter(|m| rate.flag(m)).count();
            (rate, hits as f64 / n)
        })
        .collect();
    Ok(QueryAggregate {
        normalized_query: query.to_string(),
        query_count: instances.len(),
        stats,
        rates,
    })
}

fn aggregate_header() -> Vec<String> {
    let mut header = vec!["query".to_string(), "query_count".to_string()];
    for metric in NumericMetric::ALL {
        header.push(format!("{}_n", metric.name()));
        for stat in Stat::ALL {
            header.push(format!("{}_{}", metric.name(), stat.name()));
        }
    }
    header.extend(RateMetric::ALL.iter().map(|r| r.name().to_string()));
    header
}

/// Writes the aggregates dump: one row per query, `<metric>_<stat>` columns,
/// absent statistics as empty cells.
pub fn write_aggregates<'a, W, I>(writer: W, aggregates: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a QueryAggregate>,
{
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(aggregate_header())?;
    for agg in aggregates {
        let mut row = vec![agg.normalized_query.clone(), agg.query_count.to_string()];
        for metric in NumericMetric::ALL {
            let s = agg.stat(metric);
            row.push(s.n.to_string());
            for stat in Stat::ALL {
                row.push(s.get(stat).map(|v| v.to_string()).unwrap_or_default());
            }
        }
        row.extend(RateMetric::ALL.iter().map(|r| agg.rate(*r).to_string()));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_aggregates<R: Read>(reader: R) -> Result<Vec<QueryAggregate>> {
    let mut csv = csv::Reader::from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(String::from).collect();
    if header != aggregate_header() {
        return Err(Error::Artifact("unexpected aggregates header".into()));
    }
    let parse = |cell: &str| -> Result<Option<f64>> {
        if cell.is_empty() {
            return Ok(None);
        }
        cell.parse::<f64>()
            .map(Some)
            .map_err(|_| Error::InvalidValue(format!("bad number {cell:?}")))
    };
    let mut out = Vec::new();
    for record in csv.records() {
        let record = record?;
        let mut cells = record.iter();
        let mut next = || cells.next().unwrap_or_default();
        let normalized_query = next().to_string();
        let query_count = next()
            .parse()
            .map_err(|_| Error::InvalidValue("bad query_count".into()))?;
        let mut stats = BTreeMap::new();
        for metric in NumericMetric::ALL {
            let n = next().parse().map_err(|_| Error::InvalidValue("bad count".into()))?;
            let mean = parse(next())?;
            let median = parse(next())?;
            let std = parse(next())?;
            let iqr = parse(next())?;
            stats.insert(
                metric,
                AggregateStats {
                    n,
                    mean,
                    median,
                    std,
                    iqr,
                },
            );
        }
        let mut rates = BTreeMap::new();
        for rate in RateMetric::ALL {
            let value = parse(next())?.ok_or_else(|| Error::InvalidValue("empty rate".into()))?;
            rates.insert(rate, value);
        }
        out.push(QueryAggregate {
            normalized_query,
            query_count,
            stats,
            rates,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::tests::{event, serp};
    use crate::event_log::NetworkType;
    use proptest::prelude::*;

    /// Textbook estimators written independently of `aggregate_stats`.
    fn oracle(values: &[f64]) -> (f64, f64, f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mut s = values.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| {
            let pos = p * (n - 1.0);
            let below = pos.floor();
            let frac = pos - below;
            let i = below as usize;
            if frac == 0.0 {
                s[i]
            } else {
                s[i] * (1.0 - frac) + s[i + 1] * frac
            }
        };
        let median = if s.len() % 2 == 1 {
            s[s.len() / 2]
        } else {
            (s[s.len() / 2 - 1] + s[s.len() / 2]) / 2.0
        };
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        (mean, median, std, q(0.75) - q(0.25))
    }

    #[test]
    fn stats_examples() {
        let s = aggregate_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, Some(2.5));
        assert_eq!(s.median, Some(2.5));
        assert!((s.std.unwrap() - 1.118034).abs() < 1e-6);
        assert_eq!(s.iqr, Some(1.5));
        let o = oracle(&[1.0, 2.0, 3.0, 4.0]);
        assert!((o.2 - s.std.unwrap()).abs() < 1e-12 && o.3 == 1.5);

        let single = aggregate_stats(&[5.0]).unwrap();
        assert_eq!(
            (single.mean, single.median, single.std, single.iqr),
            (Some(5.0), Some(5.0), Some(0.0), Some(0.0))
        );
        let empty = aggregate_stats(&[]).unwrap();
        assert_eq!(empty.n, 0);
        assert!(empty.mean.is_none() && empty.iqr.is_none());
        assert!(matches!(aggregate_stats(&[1.0, f64::NAN]), Err(Error::InvalidValue(_))));
    }

    fn instance(events: Vec<crate::event_log::InteractionEvent>) -> QueryInstance {
        QueryInstance::from_events(events).unwrap()
    }

    #[test]
    fn extracts_click_metrics() {
        let mut click = event("i", "e2", 3500, EventType::Click);
        click.position = Some(4);
        let m = extract_instance_metrics(&instance(vec![
            serp("i", "e1", 1000, "q"),
            click,
            event("i", "e3", 9000, EventType::SerpExit),
        ]));
        assert_eq!(m.time_to_first_click_ms, Some(2500));
        assert_eq!(m.pos_first_click, Some(4));
        assert_eq!(m.query_duration_ms, 8000);
        assert_eq!(m.num_clicks, 1);
        assert!(m.click_success && !m.cart_success);
    }

    #[test]
    fn serp_only_instance() {
        let m = extract_instance_metrics(&instance(vec![serp("i", "e1", 1000, "q")]));
        assert_eq!(m.query_duration_ms, 0);
        assert_eq!(m.num_clicks + m.num_swipes + m.num_impressions, 0);
        assert!(!m.click_success);
        assert!(m.time_to_first_click_ms.is_none());
    }

    #[test]
    fn serp_fields_pass_through() {
        let mut s = serp("i", "e1", 1000, "q");
        s.auto_suggest = Some(true);
        s.num_products_found = Some(37);
        let m = extract_instance_metrics(&instance(vec![s.clone()]));
        assert!(m.is_good_network && m.is_auto_suggest);
        assert_eq!(m.num_products_found, 37);
        for (net, good) in [
            (NetworkType::FourG, true),
            (NetworkType::ThreeG, false),
            (NetworkType::TwoG, false),
            (NetworkType::Other, false),
        ] {
            s.network_type = Some(net);
            assert_eq!(
                extract_instance_metrics(&instance(vec![s.clone()])).is_good_network,
                good
            );
        }
    }

    fn metrics_with_click(ttfc: Option<u64>) -> QueryInstanceMetrics {
        let mut m = extract_instance_metrics(&instance(vec![serp("i", "e1", 1000, "q")]));
        if let Some(t) = ttfc {
            m.time_to_first_click_ms = Some(t);
            m.pos_first_click = Some(2);
            m.num_clicks = 1;
            m.click_success = true;
            m.query_duration_ms = t + 100;
        }
        m
    }

    #[test]
    fn aggregate_uses_present_values_only() {
        let agg = aggregate_query(
            "q",
            &[
                metrics_with_click(Some(1000)),
                metrics_with_click(None),
                metrics_with_click(Some(3000)),
            ],
        )
        .unwrap();
        assert!((agg.click_success_rate() - 2.0 / 3.0).abs() < 1e-15);
        let ttfc = agg.stat(NumericMetric::TimeToFirstClick);
        assert_eq!(ttfc.n, 2);
        assert_eq!(ttfc.mean, Some(2000.0));
        assert_eq!(agg.query_count, 3);

        let none = aggregate_query("q", &[metrics_with_click(None), metrics_with_click(None)]).unwrap();
        assert!(none.rates.values().filter(|r| **r != 1.0).all(|r| *r == 0.0));
        assert_eq!(none.click_success_rate(), 0.0);
        assert_eq!(none.stat(NumericMetric::TimeToFirstClick).n, 0);

        let one = aggregate_query("q", &[metrics_with_click(Some(5))]).unwrap();
        assert_eq!(one.query_count, 1);
        assert!(one.stats.values().all(|s| s.std.is_none_or(|v| v == 0.0)));

        assert!(matches!(aggregate_query("q", &[]), Err(Error::EmptyAggregate)));
    }

    #[test]
    fn aggregates_csv_round_trip() {
        let aggs = vec![
            aggregate_query("a b", &[metrics_with_click(Some(10)), metrics_with_click(None)]).unwrap(),
            aggregate_query("c", &[metrics_with_click(None)]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_aggregates(&mut buf, &aggs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains("time_to_first_click_mean"));
        assert_eq!(read_aggregates(buf.as_slice()).unwrap(), aggs);
    }

    proptest! {
        #[test]
        fn stats_match_oracle(values in prop::collection::vec(-1e6f64..1e6, 1..60)) {
            let s = aggregate_stats(&values).unwrap();
            let (mean, median, std, iqr) = oracle(&values);
            prop_assert!((s.mean.unwrap() - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
            prop_assert!((s.median.unwrap() - median).abs() <= 1e-9 * (1.0 + median.abs()));
            prop_assert!((s.std.unwrap() - std).abs() <= 1e-9 * (1.0 + std));
            prop_assert!((s.iqr.unwrap() - iqr).abs() <= 1e-9 * (1.0 + iqr));
        }

        #[test]
        fn stats_permutation_invariant(mut values in prop::collection::vec(-1e3f64..1e3, 1..40), seed in 0u64..1000) {
            let a = aggregate_stats(&values).unwrap();
            let k = (seed as usize) % values.len();
            values.rotate_left(k);
            values.reverse();
            prop_assert_eq!(a, aggregate_stats(&values).unwrap());
        }

        #[test]
        fn stats_scale_homogeneously(values in prop::collection::vec(0f64..1e3, 1..40), c in 0.01f64..100.0) {
            let a = aggregate_stats(&values).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            let b = aggregate_stats(&scaled).unwrap();
            for stat in Stat::ALL {
                let (x, y) = (a.get(stat).unwrap() * c, b.get(stat).unwrap());
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn copies_have_zero_spread(copies in 1usize..20, ttfc in prop::option::of(0u64..100_000)) {
            let m = metrics_with_click(ttfc);
            prop_assert_eq!(m.click_success, m.pos_first_click.is_some() && m.time_to_first_click_ms.is_some());
            let agg = aggregate_query("q", &vec![m; copies]).unwrap();
            for s in agg.stats.values() {
                prop_assert!(s.std.is_none_or(|v| v == 0.0));
                prop_assert!(s.iqr.is_none_or(|v| v == 0.0));
            }
            prop_assert!(agg.rates.values().all(|r| *r == 0.0 || *r == 1.0));
        }
    }
}
