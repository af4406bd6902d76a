//! Ingestion of the public mobility and death-count CSV formats, region
//! joining, and a synthetic-data generator used as the learning oracle.

use std::collections::BTreeMap;
use std::io;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epimodel;
use crate::learn::{ParamSet, RegionDataset};
use crate::mobility::{self, MobilityVector};

/// The six mobility categories of the public community-mobility schema, in
/// column order.
pub const MOBILITY_CATEGORIES: [&str; 6] = [
    "retail_and_recreation",
    "grocery_and_pharmacy",
    "parks",
    "transit_stations",
    "workplaces",
    "residential",
];

const PERCENT_MIN: f64 = -100.0;
const PERCENT_MAX: f64 = 500.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{source_name} csv: missing required columns: {columns:?}")]
    MissingColumns {
        source_name: &'static str,
        columns: Vec<String>,
    },
    #[error("{source_name} csv is empty")]
    EmptyFile { source_name: &'static str },
    #[error("region {region} has no rows in the {source_name} data for the requested range")]
    RegionMissing {
        region: String,
        source_name: &'static str,
    },
    #[error("region {region}: {series} gap of {days} days ending {date} exceeds the fill policy ({max} days)")]
    Gap {
        region: String,
        series: String,
        date: NaiveDate,
        days: usize,
        max: usize,
    },
    #[error("no population supplied for region {0}")]
    PopulationMissing(String),
    #[error("empty date range: {from} to {to}")]
    EmptyRange { from: NaiveDate, to: NaiveDate },
    #[error("invalid synthetic-data spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Learn(#[from] crate::learn::LearnError),
    #[error(transparent)]
    Mobility(#[from] crate::mobility::MobilityError),
    #[error(transparent)]
    Epi(#[from] crate::epimodel::EpiError),
}

/// One parsed community-mobility row. Percent values may be missing.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityRow {
    pub country_region: String,
    pub sub_region_1: String,
    pub sub_region_2: String,
    /// `census_fips_code`; the join key.
    pub fips: String,
    pub date: NaiveDate,
    /// Signed percent change from baseline per category, aligned with
    /// [`MOBILITY_CATEGORIES`].
    pub percents: Vec<Option<f64>>,
}

/// One parsed death-count row with cumulative semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct DeathsRow {
    pub date: NaiveDate,
    pub county: String,
    pub state: String,
    pub fips: String,
    pub cases: f64,
    pub deaths: f64,
}

/// A row that failed validation, kept for the rejects report.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

/// Parse result: valid rows plus the rejects report. Malformed rows are never
/// silently dropped.
#[derive(Debug, Clone)]
pub struct ParseOutput<T> {
    pub rows: Vec<T>,
    pub rejects: Vec<RejectedRow>,
}

fn find_columns(
    headers: &csv::StringRecord,
    wanted: &[String],
    source_name: &'static str,
) -> Result<Vec<usize>, DataError> {
    let mut missing = Vec::new();
    let mut indices = Vec::with_capacity(wanted.len());
    for name in wanted {
        match headers.iter().position(|h| h == name) {
            Some(i) => indices.push(i),
            None => missing.push(name.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(DataError::MissingColumns {
            source_name,
            columns: missing,
        });
    }
    Ok(indices)
}

/// Parses a community-mobility CSV. Unknown extra columns are ignored; the
/// published region keys, date, and all six category columns are required.
pub fn parse_mobility_csv(reader: impl io::Read) -> Result<ParseOutput<MobilityRow>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::EmptyFile {
            source_name: "mobility",
        });
    }
    let mut wanted: Vec<String> = vec![
        "country_region".into(),
        "sub_region_1".into(),
        "sub_region_2".into(),
        "census_fips_code".into(),
        "date".into(),
    ];
    wanted.extend(
        MOBILITY_CATEGORIES
            .iter()
            .map(|c| format!("{c}_percent_change_from_baseline")),
    );
    let idx = find_columns(&headers, &wanted, "mobility")?;

    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    for (record_no, record) in rdr.records().enumerate() {
        let line = record_no as u64 + 2; // header is line 1
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejects.push(RejectedRow {
                    line,
                    reason: format!("unreadable record: {e}"),
                });
                continue;
            }
        };
        let field = |i: usize| record.get(idx[i]).unwrap_or("").trim().to_string();
        let date = match NaiveDate::parse_from_str(&field(4), "%Y-%m-%d") {
            Ok(d) => d,
            Err(_) => {
                rejects.push(RejectedRow {
                    line,
                    reason: format!("bad date {:?}", field(4)),
                });
                continue;
            }
        };
        let mut percents = Vec::with_capacity(MOBILITY_CATEGORIES.len());
        let mut bad = None;
        for (j, _) in MOBILITY_CATEGORIES.iter().enumerate() {
            let raw = field(5 + j);
            if raw.is_empty() {
                percents.push(None);
                continue;
            }
            match raw.parse::<f64>() {
                Ok(p) if (PERCENT_MIN..=PERCENT_MAX).contains(&p) => percents.push(Some(p)),
                Ok(p) => {
                    bad = Some(format!(
                        "percent {p} outside [{PERCENT_MIN}, {PERCENT_MAX}] in {}",
                        MOBILITY_CATEGORIES[j]
                    ));
                    break;
                }
                Err(_) => {
                    bad = Some(format!("unparseable percent {raw:?} in {}", MOBILITY_CATEGORIES[j]));
                    break;
                }
            }
        }
        if let Some(reason) = bad {
            rejects.push(RejectedRow { line, reason });
            continue;
        }
        rows.push(MobilityRow {
            country_region: field(0),
            sub_region_1: field(1),
            sub_region_2: field(2),
            fips: field(3),
            date,
            percents,
        });
    }
    Ok(ParseOutput { rows, rejects })
}

/// Parses a county death-count CSV (`date,county,state,fips,cases,deaths`).
/// Cumulative semantics are preserved; decreasing series are cleaned later,
/// at training time.
pub fn parse_deaths_csv(reader: impl io::Read) -> Result<ParseOutput<DeathsRow>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::EmptyFile {
            source_name: "deaths",
        });
    }
    let wanted: Vec<String> = ["date", "county", "state", "fips", "cases", "deaths"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let idx = find_columns(&headers, &wanted, "deaths")?;

    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    for (record_no, record) in rdr.records().enumerate() {
        let line = record_no as u64 + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejects.push(RejectedRow {
                    line,
                    reason: format!("unreadable record: {e}"),
                });
                continue;
            }
        };
        let field = |i: usize| record.get(idx[i]).unwrap_or("").trim().to_string();
        let date = match NaiveDate::parse_from_str(&field(0), "%Y-%m-%d") {
            Ok(d) => d,
            Err(_) => {
                rejects.push(RejectedRow {
                    line,
                    reason: format!("bad date {:?}", field(0)),
                });
                continue;
            }
        };
        let fips = field(3);
        if fips.is_empty() {
            rejects.push(RejectedRow {
                line,
                reason: "county row without a fips code".into(),
            });
            continue;
        }
        let parse_count = |raw: &str| -> Result<f64, String> {
            let x: f64 = raw
                .parse()
                .map_err(|_| format!("unparseable count {raw:?}"))?;
            if x < 0.0 {
                return Err(format!("negative count {x}"));
            }
            Ok(x)
        };
        let cases = match parse_count(&field(4)) {
            Ok(x) => x,
            Err(reason) => {
                rejects.push(RejectedRow { line, reason });
                continue;
            }
        };
        let deaths = match parse_count(&field(5)) {
            Ok(x) => x,
            Err(reason) => {
                rejects.push(RejectedRow { line, reason });
                continue;
            }
        };
        rows.push(DeathsRow {
            date,
            county: field(1),
            state: field(2),
            fips,
            cases,
            deaths,
        });
    }
    Ok(ParseOutput { rows, rejects })
}

/// Join policy and selection.
#[derive(Debug, Clone)]
pub struct JoinSpec {
    pub region_ids: Vec<String>,
    pub from: NaiveDate,
    pub to: NaiveDate,
    /// Indices into [`MOBILITY_CATEGORIES`] to keep, in output order.
    pub categories: Vec<usize>,
    pub populations: BTreeMap<String, f64>,
    /// Longest interior run of missing days the LOCF fill will bridge.
    pub max_gap_days: usize,
}

impl JoinSpec {
    pub fn category_names(&self) -> Vec<String> {
        self.categories
            .iter()
            .map(|&i| MOBILITY_CATEGORIES[i].to_string())
            .collect()
    }
}

fn date_range(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut d = from;
    while d <= to {
        out.push(d);
        d = d.succ_opt().unwrap();
    }
    out
}

/// Fills a per-day series: missing values are carried forward from the last
/// observation; leading missing days take `leading`. Interior runs longer
/// than `max_gap` are an error.
fn fill_series(
    values: &[Option<f64>],
    dates: &[NaiveDate],
    leading: f64,
    max_gap: usize,
    region: &str,
    series: &str,
) -> Result<Vec<f64>, DataError> {
    let mut out = Vec::with_capacity(values.len());
    let mut last: Option<f64> = None;
    let mut run = 0usize;
    for (t, v) in values.iter().enumerate() {
        match v {
            Some(x) => {
                last = Some(*x);
                run = 0;
                out.push(*x);
            }
            None => match last {
                Some(x) => {
                    run += 1;
                    if run > max_gap {
                        return Err(DataError::Gap {
                            region: region.to_string(),
                            series: series.to_string(),
                            date: dates[t],
                            days: run,
                            max: max_gap,
                        });
                    }
                    out.push(x);
                }
                None => out.push(leading),
            },
        }
    }
    Ok(out)
}

/// Joins mobility and death rows into per-region aligned daily series.
///
/// Missing mobility percents are filled by last observation carried forward,
/// with the 0% baseline for leading days; percents are then converted to
/// positive levels. Duplicate rows for the same day combine symmetrically
/// (mean for mobility, max for deaths), so the join does not depend on input
/// order.
pub fn join(
    mobility_rows: &[MobilityRow],
    deaths_rows: &[DeathsRow],
    spec: &JoinSpec,
) -> Result<Vec<RegionDataset>, DataError> {
    if spec.from > spec.to {
        return Err(DataError::EmptyRange {
            from: spec.from,
            to: spec.to,
        });
    }
    if spec.categories.is_empty() || spec.categories.iter().any(|&i| i >= MOBILITY_CATEGORIES.len())
    {
        return Err(DataError::BadSpec(format!(
            "category selection {:?} must be non-empty indices below {}",
            spec.categories,
            MOBILITY_CATEGORIES.len()
        )));
    }
    let dates = date_range(spec.from, spec.to);
    let mut out = Vec::with_capacity(spec.region_ids.len());
    for region in &spec.region_ids {
        let population = *spec
            .populations
            .get(region)
            .ok_or_else(|| DataError::PopulationMissing(region.clone()))?;

        // date -> per-category mean of observed percents
        let mut mob_by_date: BTreeMap<NaiveDate, Vec<(f64, usize)>> = BTreeMap::new();
        for row in mobility_rows.iter().filter(|r| &r.fips == region) {
            if row.date < spec.from || row.date > spec.to {
                continue;
            }
            let acc = mob_by_date
                .entry(row.date)
                .or_insert_with(|| vec![(0.0, 0); spec.categories.len()]);
            for (slot, &cat) in spec.categories.iter().enumerate() {
                if let Some(p) = row.percents[cat] {
                    acc[slot].0 += p;
                    acc[slot].1 += 1;
                }
            }
        }
        if mob_by_date.is_empty() {
            return Err(DataError::RegionMissing {
                region: region.clone(),
                source_name: "mobility",
            });
        }

        let mut deaths_by_date: BTreeMap<NaiveDate, f64> = BTreeMap::new();
        for row in deaths_rows.iter().filter(|r| &r.fips == region) {
            if row.date < spec.from || row.date > spec.to {
                continue;
            }
            let e = deaths_by_date.entry(row.date).or_insert(f64::NEG_INFINITY);
            *e = e.max(row.deaths);
        }
        if deaths_by_date.is_empty() {
            return Err(DataError::RegionMissing {
                region: region.clone(),
                source_name: "deaths",
            });
        }

        let mut mobility = Vec::with_capacity(dates.len());
        for (slot, &cat) in spec.categories.iter().enumerate() {
            let series: Vec<Option<f64>> = dates
                .iter()
                .map(|d| {
                    mob_by_date.get(d).and_then(|acc| {
                        let (sum, n) = acc[slot];
                        (n > 0).then(|| sum / n as f64)
                    })
                })
                .collect();
            let filled = fill_series(
                &series,
                &dates,
                0.0,
                spec.max_gap_days,
                region,
                MOBILITY_CATEGORIES[cat],
            )?;
            mobility.push(filled);
        }
        let mobility: Vec<MobilityVector> = (0..dates.len())
            .map(|t| {
                MobilityVector(
                    mobility
                        .iter()
                        .map(|series| mobility::percent_to_level(series[t]))
                        .collect(),
                )
            })
            .collect();

        let deaths_series: Vec<Option<f64>> =
            dates.iter().map(|d| deaths_by_date.get(d).copied()).collect();
        let deaths_raw = fill_series(
            &deaths_series,
            &dates,
            0.0,
            spec.max_gap_days,
            region,
            "deaths",
        )?;

        let ds = RegionDataset {
            region_id: region.clone(),
            population,
            days: dates.clone(),
            mobility,
            deaths_raw,
        };
        ds.validate()?;
        out.push(ds);
    }
    Ok(out)
}

/// On-disk form of a joined dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub categories: Vec<String>,
    pub regions: Vec<RegionDataset>,
}

/// Bounded random walk in level space driving the synthetic mobility series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityWalk {
    pub start: Vec<f64>,
    pub step: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Specification of a synthetic multi-region dataset generated from known
/// ground-truth parameters.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub regions: usize,
    pub days: usize,
    pub true_params: ParamSet,
    pub populations: BTreeMap<String, f64>,
    pub walk: MobilityWalk,
    /// Scale of multiplicative uniform observation noise on deaths;
    /// 0 reproduces the model exactly.
    pub noise: f64,
    pub start_date: NaiveDate,
}

impl SynthSpec {
    fn validate(&self) -> Result<(), DataError> {
        if self.days < 14 {
            return Err(DataError::BadSpec(format!(
                "days = {} must be at least 14",
                self.days
            )));
        }
        if self.regions != self.true_params.per_region.len()
            || self.regions != self.populations.len()
        {
            return Err(DataError::BadSpec(format!(
                "regions = {}, parameter sets = {}, populations = {} must all match",
                self.regions,
                self.true_params.per_region.len(),
                self.populations.len()
            )));
        }
        for id in self.true_params.per_region.keys() {
            if !self.populations.contains_key(id) {
                return Err(DataError::PopulationMissing(id.clone()));
            }
        }
        self.true_params.validate()?;
        let k = self
            .true_params
            .per_region
            .values()
            .next()
            .map(|rp| rp.mobility_map.num_categories())
            .unwrap_or(0);
        if self.walk.start.len() != k || self.walk.lower.len() != k || self.walk.upper.len() != k {
            return Err(DataError::BadSpec(format!(
                "walk dimensions must equal the {k} mobility categories"
            )));
        }
        for j in 0..k {
            if !(0.0 < self.walk.lower[j]
                && self.walk.lower[j] <= self.walk.start[j]
                && self.walk.start[j] <= self.walk.upper[j])
            {
                return Err(DataError::BadSpec(format!(
                    "walk bounds for category {j} must satisfy 0 < lower <= start <= upper"
                )));
            }
        }
        if !(self.walk.step >= 0.0) || !(self.noise >= 0.0) {
            return Err(DataError::BadSpec(
                "walk step and noise must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Synthetic datasets plus the noiseless death series for scoring.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub datasets: Vec<RegionDataset>,
    /// Noiseless `D(t)` per region, in dataset order.
    pub noiseless_deaths: Vec<Vec<f64>>,
}

/// Generates per-region mobility via the bounded random walk and deaths via
/// the model under `true_params`. Deterministic under `seed`.
pub fn synth_gen(spec: &SynthSpec, seed: u64) -> Result<SynthOutput, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = spec.days - 1;
    let dates = {
        let mut d = spec.start_date;
        let mut out = Vec::with_capacity(spec.days);
        for _ in 0..spec.days {
            out.push(d);
            d = d.succ_opt().unwrap();
        }
        out
    };
    let mut datasets = Vec::with_capacity(spec.regions);
    let mut noiseless = Vec::with_capacity(spec.regions);
    for (region_id, rp) in &spec.true_params.per_region {
        let k = rp.mobility_map.num_categories();
        let mut level = spec.walk.start.clone();
        let mut mobility = Vec::with_capacity(spec.days);
        mobility.push(MobilityVector(level.clone()));
        for _ in 1..spec.days {
            for j in 0..k {
                let delta = rng.random_range(-spec.walk.step..=spec.walk.step);
                level[j] = (level[j] + delta).clamp(spec.walk.lower[j], spec.walk.upper[j]);
            }
            mobility.push(MobilityVector(level.clone()));
        }
        let betas: Vec<f64> = mobility
            .iter()
            .take(horizon)
            .map(|m| mobility::beta(m, &rp.mobility_map))
            .collect::<Result<_, _>>()?;
        let traj = epimodel::rollout(
            &rp.init,
            &spec.true_params.global,
            rp.mobility_map.gamma_a,
            &betas,
            horizon,
        )?;
        let d_true = traj.deaths();
        let deaths_raw: Vec<f64> = d_true
            .iter()
            .map(|d| {
                let eps = rng.random_range(-1.0..=1.0);
                (d * (1.0 + spec.noise * eps)).max(0.0)
            })
            .collect();
        datasets.push(RegionDataset {
            region_id: region_id.clone(),
            population: spec.populations[region_id],
            days: dates.clone(),
            mobility,
            deaths_raw,
        });
        noiseless.push(d_true);
    }
    Ok(SynthOutput {
        datasets,
        noiseless_deaths: noiseless,
    })
}
