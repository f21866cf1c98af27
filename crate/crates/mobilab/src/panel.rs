//! Canonical panel data model, CSV ingestion/emission, and the
//! sample-construction transforms applied before estimation.
//!
//! Panels are immutable after construction; every transform returns a new
//! panel and appends a line to the provenance chain in the metadata.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result, RowError};
use crate::rng::substream;

/// Which side of a young/old profile split a pseudo-person carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupTag {
    Young,
    Old,
}

impl GroupTag {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupTag::Young => "young",
            GroupTag::Old => "old",
        }
    }
}

/// One individual of the child generation (or a father, in two-generation
/// panels, in which case `parent_log_income` is absent).
#[derive(Debug, Clone)]
pub struct PersonRecord {
    pub person_id: String,
    pub family_id: String,
    /// Birth year.
    pub cohort: i32,
    pub sex: u8,
    pub educ_group: u8,
    pub parent_educ_group: u8,
    /// Log lifetime income of the father; the second-step regressor.
    pub parent_log_income: Option<f64>,
    /// Known log lifetime income (synthetic panels only).
    pub true_log_lifetime: Option<f64>,
    pub group_tag: Option<GroupTag>,
    /// Additional person-level covariates (candidate predictors for the
    /// penalized first step). Not part of the core schema; written as extra
    /// CSV columns when present.
    pub extras: BTreeMap<String, f64>,
}

/// One person-year income observation, in levels.
#[derive(Debug, Clone, Copy)]
pub struct IncomeObs {
    /// Index into `Panel::persons`.
    pub person: u32,
    pub year: i32,
    pub age: u16,
    pub income_level: f64,
}

#[derive(Debug, Clone)]
pub struct PanelMeta {
    pub age_min: u16,
    pub age_max: u16,
    pub educ_groups: u8,
    /// Provenance: one line per transform applied since construction.
    pub transforms: Vec<String>,
}

/// An immutable two-column-family panel: persons plus their income
/// observations, sorted by (person, age) with per-person ranges for O(1)
/// slicing.
#[derive(Debug, Clone)]
pub struct Panel {
    persons: Vec<PersonRecord>,
    obs: Vec<IncomeObs>,
    obs_ranges: Vec<Range<usize>>,
    pub meta: PanelMeta,
}

impl Panel {
    /// Build a panel, validating invariants: unique person ids, resolvable
    /// observation indices, unique (person, age), ages within bounds.
    pub fn new(persons: Vec<PersonRecord>, mut obs: Vec<IncomeObs>, meta: PanelMeta) -> Result<Panel> {
        let mut seen = HashMap::with_capacity(persons.len());
        for (i, p) in persons.iter().enumerate() {
            if let Some(prev) = seen.insert(p.person_id.clone(), i) {
                return Err(Error::InvalidInput(format!(
                    "duplicate person_id {:?} (records {} and {})",
                    p.person_id, prev, i
                )));
            }
            if meta.educ_groups > 0 && p.educ_group >= meta.educ_groups {
                return Err(Error::InvalidInput(format!(
                    "person {:?}: educ_group {} outside declared {} groups",
                    p.person_id, p.educ_group, meta.educ_groups
                )));
            }
        }
        for o in &obs {
            if o.person as usize >= persons.len() {
                return Err(Error::InvalidInput(format!(
                    "observation references person index {} out of range",
                    o.person
                )));
            }
            if o.age < meta.age_min || o.age > meta.age_max {
                return Err(Error::InvalidInput(format!(
                    "person {:?}: age {} outside [{}, {}]",
                    persons[o.person as usize].person_id, o.age, meta.age_min, meta.age_max
                )));
            }
        }
        obs.sort_by_key(|o| (o.person, o.age));
        for w in obs.windows(2) {
            if w[0].person == w[1].person && w[0].age == w[1].age {
                return Err(Error::InvalidInput(format!(
                    "duplicate (person_id, age): ({:?}, {})",
                    persons[w[0].person as usize].person_id, w[0].age
                )));
            }
        }
        let obs_ranges = build_ranges(&obs, persons.len());
        Ok(Panel { persons, obs, obs_ranges, meta })
    }

    pub fn persons(&self) -> &[PersonRecord] {
        &self.persons
    }

    pub fn obs(&self) -> &[IncomeObs] {
        &self.obs
    }

    pub fn n_persons(&self) -> usize {
        self.persons.len()
    }

    pub fn n_obs(&self) -> usize {
        self.obs.len()
    }

    /// The observations of person `i`, sorted by age.
    pub fn obs_for(&self, i: usize) -> &[IncomeObs] {
        &self.obs[self.obs_ranges[i].clone()]
    }

    pub fn person_index(&self, person_id: &str) -> Option<usize> {
        self.persons.iter().position(|p| p.person_id == person_id)
    }

    /// Calendar years present, sorted ascending.
    pub fn years(&self) -> Vec<i32> {
        let mut ys: Vec<i32> = self.obs.iter().map(|o| o.year).collect();
        ys.sort_unstable();
        ys.dedup();
        ys
    }

    fn derived(&self, persons: Vec<PersonRecord>, obs: Vec<IncomeObs>, note: &str) -> Result<Panel> {
        let mut meta = self.meta.clone();
        meta.transforms.push(note.to_string());
        Panel::new(persons, obs, meta)
    }
}

fn build_ranges(obs: &[IncomeObs], n_persons: usize) -> Vec<Range<usize>> {
    let mut ranges = vec![0..0; n_persons];
    let mut i = 0;
    while i < obs.len() {
        let person = obs[i].person as usize;
        let start = i;
        while i < obs.len() && obs[i].person as usize == person {
            i += 1;
        }
        ranges[person] = start..i;
    }
    ranges
}

/// Inclusive age window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AgeWindow {
    pub lo: u16,
    pub hi: u16,
}

impl AgeWindow {
    pub fn new(lo: u16, hi: u16) -> Result<AgeWindow> {
        if lo > hi {
            return Err(Error::InvalidInput(format!("age window {lo}-{hi} has lo > hi")));
        }
        Ok(AgeWindow { lo, hi })
    }

    pub fn contains(&self, age: u16) -> bool {
        age >= self.lo && age <= self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl std::fmt::Display for AgeWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion / emission
// ---------------------------------------------------------------------------

/// Options for CSV ingestion.
#[derive(Debug, Clone)]
pub struct SchemaOptions {
    /// Strict: any unparseable row aborts the load. Lenient: rows with bad
    /// numerics are skipped and reported.
    pub strict: bool,
    pub age_min: u16,
    pub age_max: u16,
    pub educ_groups: u8,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        SchemaOptions { strict: true, age_min: 25, age_max: 58, educ_groups: 4 }
    }
}

/// Result of a CSV load: the panel plus any row-level errors collected in
/// lenient mode.
#[derive(Debug)]
pub struct LoadReport {
    pub panel: Panel,
    pub row_errors: Vec<RowError>,
}

const PERSON_COLS: [&str; 7] =
    ["person_id", "family_id", "cohort", "sex", "educ_group", "parent_educ_group", "parent_log_income"];
const INCOME_COLS: [&str; 4] = ["person_id", "year", "age", "income_level"];

/// Load a panel from a persons file and an incomes file.
///
/// Required columns are validated against the declared schema; extra person
/// columns are kept as person-level covariates. Duplicate (person_id, age)
/// pairs are a hard error naming both lines.
pub fn load_csv(
    persons_path: &Path,
    incomes_path: &Path,
    opts: &SchemaOptions,
) -> Result<LoadReport> {
    let mut row_errors = Vec::new();

    let mut rdr = csv::Reader::from_path(persons_path)
        .map_err(|e| Error::Csv(format!("{}: {e}", persons_path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    for required in PERSON_COLS {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Csv(format!(
                "persons file missing required column {required:?}"
            )));
        }
    }
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let idx_id = col("person_id");
    let idx_fam = col("family_id");
    let idx_cohort = col("cohort");
    let idx_sex = col("sex");
    let idx_educ = col("educ_group");
    let idx_peduc = col("parent_educ_group");
    let idx_pinc = col("parent_log_income");
    let idx_truth = headers.iter().position(|h| h == "true_log_lifetime");
    let idx_tag = headers.iter().position(|h| h == "group_tag");
    let extra_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, h)| {
            !PERSON_COLS.contains(&h.as_str())
                && h.as_str() != "true_log_lifetime"
                && h.as_str() != "group_tag"
                && Some(*i) != idx_truth
        })
        .map(|(i, h)| (i, h.clone()))
        .collect();

    let mut persons = Vec::new();
    for (ri, rec) in rdr.records().enumerate() {
        let line = ri as u64 + 2;
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let parse = || -> std::result::Result<PersonRecord, String> {
            let mut extras = BTreeMap::new();
            for (i, name) in &extra_cols {
                let raw = rec.get(*i).unwrap_or("");
                if !raw.is_empty() {
                    extras.insert(
                        name.clone(),
                        raw.parse::<f64>().map_err(|_| format!("bad {name}: {raw:?}"))?,
                    );
                }
            }
            let opt_f64 = |i: usize, name: &str| -> std::result::Result<Option<f64>, String> {
                let raw = rec.get(i).unwrap_or("");
                if raw.is_empty() {
                    Ok(None)
                } else {
                    raw.parse::<f64>().map(Some).map_err(|_| format!("bad {name}: {raw:?}"))
                }
            };
            Ok(PersonRecord {
                person_id: rec.get(idx_id).unwrap_or("").to_string(),
                family_id: rec.get(idx_fam).unwrap_or("").to_string(),
                cohort: rec
                    .get(idx_cohort)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| format!("bad cohort: {:?}", rec.get(idx_cohort)))?,
                sex: rec
                    .get(idx_sex)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| format!("bad sex: {:?}", rec.get(idx_sex)))?,
                educ_group: rec
                    .get(idx_educ)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| format!("bad educ_group: {:?}", rec.get(idx_educ)))?,
                parent_educ_group: rec
                    .get(idx_peduc)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| format!("bad parent_educ_group: {:?}", rec.get(idx_peduc)))?,
                parent_log_income: opt_f64(idx_pinc, "parent_log_income")?,
                true_log_lifetime: match idx_truth {
                    Some(i) => opt_f64(i, "true_log_lifetime")?,
                    None => None,
                },
                group_tag: match idx_tag.map(|i| rec.get(i).unwrap_or("")) {
                    Some("young") => Some(GroupTag::Young),
                    Some("old") => Some(GroupTag::Old),
                    Some("") | None => None,
                    Some(other) => return Err(format!("bad group_tag: {other:?}")),
                },
                extras,
            })
        };
        match parse() {
            Ok(p) => persons.push(p),
            Err(message) => {
                if opts.strict {
                    return Err(Error::MalformedRows(vec![RowError { line, message }]));
                }
                row_errors.push(RowError { line, message });
            }
        }
    }

    let id_to_idx: HashMap<&str, u32> = persons
        .iter()
        .enumerate()
        .map(|(i, p)| (p.person_id.as_str(), i as u32))
        .collect();

    let mut rdr = csv::Reader::from_path(incomes_path)
        .map_err(|e| Error::Csv(format!("{}: {e}", incomes_path.display())))?;
    let iheaders: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    for required in INCOME_COLS {
        if !iheaders.iter().any(|h| h == required) {
            return Err(Error::Csv(format!(
                "incomes file missing required column {required:?}"
            )));
        }
    }
    let icol = |name: &str| iheaders.iter().position(|h| h == name).unwrap();
    let (ii_id, ii_year, ii_age, ii_inc) =
        (icol("person_id"), icol("year"), icol("age"), icol("income_level"));

    let mut obs = Vec::new();
    let mut first_line: HashMap<(u32, u16), u64> = HashMap::new();
    for (ri, rec) in rdr.records().enumerate() {
        let line = ri as u64 + 2;
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let parse = || -> std::result::Result<IncomeObs, String> {
            let id = rec.get(ii_id).unwrap_or("");
            let person = *id_to_idx
                .get(id)
                .ok_or_else(|| format!("unknown person_id {id:?}"))?;
            Ok(IncomeObs {
                person,
                year: rec
                    .get(ii_year)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| format!("bad year: {:?}", rec.get(ii_year)))?,
                age: rec
                    .get(ii_age)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| format!("bad age: {:?}", rec.get(ii_age)))?,
                income_level: rec
                    .get(ii_inc)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| format!("bad income_level: {:?}", rec.get(ii_inc)))?,
            })
        };
        match parse() {
            Ok(o) => {
                if let Some(prev) = first_line.insert((o.person, o.age), line) {
                    return Err(Error::Csv(format!(
                        "duplicate (person_id, age) at lines {prev} and {line}: ({:?}, {})",
                        persons[o.person as usize].person_id, o.age
                    )));
                }
                obs.push(o);
            }
            Err(message) => {
                if opts.strict {
                    return Err(Error::MalformedRows(vec![RowError { line, message }]));
                }
                row_errors.push(RowError { line, message });
            }
        }
    }

    let meta = PanelMeta {
        age_min: opts.age_min,
        age_max: opts.age_max,
        educ_groups: opts.educ_groups,
        transforms: vec![format!(
            "load_csv({}, {})",
            persons_path.display(),
            incomes_path.display()
        )],
    };
    Ok(LoadReport { panel: Panel::new(persons, obs, meta)?, row_errors })
}

/// Format a float losslessly (shortest representation that round-trips).
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Write the panel to a persons file and an incomes file.
///
/// Integer fields are exact and floats round-trip; optional fields are empty
/// strings.
pub fn write_csv(panel: &Panel, persons_path: &Path, incomes_path: &Path) -> Result<()> {
    let extra_names: Vec<String> = {
        let mut set: Vec<String> = Vec::new();
        for p in panel.persons() {
            for k in p.extras.keys() {
                if !set.contains(k) {
                    set.push(k.clone());
                }
            }
        }
        set.sort();
        set
    };
    let any_truth = panel.persons().iter().any(|p| p.true_log_lifetime.is_some());
    let any_tag = panel.persons().iter().any(|p| p.group_tag.is_some());

    let mut w = std::io::BufWriter::new(std::fs::File::create(persons_path)?);
    let mut header: Vec<&str> = PERSON_COLS.to_vec();
    if any_truth {
        header.push("true_log_lifetime");
    }
    if any_tag {
        header.push("group_tag");
    }
    let mut header: Vec<String> = header.into_iter().map(String::from).collect();
    header.extend(extra_names.iter().cloned());
    writeln!(w, "{}", header.join(","))?;
    for p in panel.persons() {
        let mut fields = vec![
            p.person_id.clone(),
            p.family_id.clone(),
            p.cohort.to_string(),
            p.sex.to_string(),
            p.educ_group.to_string(),
            p.parent_educ_group.to_string(),
            p.parent_log_income.map(fmt_f64).unwrap_or_default(),
        ];
        if any_truth {
            fields.push(p.true_log_lifetime.map(fmt_f64).unwrap_or_default());
        }
        if any_tag {
            fields.push(p.group_tag.map(|t| t.as_str().to_string()).unwrap_or_default());
        }
        for name in &extra_names {
            fields.push(p.extras.get(name).copied().map(fmt_f64).unwrap_or_default());
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;

    let mut w = std::io::BufWriter::new(std::fs::File::create(incomes_path)?);
    writeln!(w, "person_id,year,age,income_level")?;
    for o in panel.obs() {
        writeln!(
            w,
            "{},{},{},{}",
            panel.persons()[o.person as usize].person_id,
            o.year,
            o.age,
            fmt_f64(o.income_level)
        )?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// Replace every income below `floor` by `floor`. Returns the new panel and
/// the number of affected rows.
pub fn bottom_code(panel: &Panel, floor: f64) -> Result<(Panel, usize)> {
    if floor <= 0.0 {
        return Err(Error::InvalidInput(format!("bottom-code floor must be > 0, got {floor}")));
    }
    let mut affected = 0usize;
    let obs = panel
        .obs()
        .iter()
        .map(|o| {
            if o.income_level < floor {
                affected += 1;
                IncomeObs { income_level: floor, ..*o }
            } else {
                *o
            }
        })
        .collect();
    let panel = panel.derived(panel.persons().to_vec(), obs, &format!("bottom_code({floor})"))?;
    Ok((panel, affected))
}

/// Outcome of a person-dropping transform.
pub struct TransformReport {
    pub panel: Panel,
    pub dropped_persons: usize,
}

/// Keep only observations with calendar year in [lo, hi]; persons left with
/// no observations are dropped and counted. This is how a trends sample
/// truncates recent cohorts to their observed young ages.
pub fn restrict_years(panel: &Panel, lo: i32, hi: i32) -> Result<TransformReport> {
    if lo > hi {
        return Err(Error::InvalidInput(format!("year range {lo}-{hi} reversed")));
    }
    retain_obs(panel, &format!("restrict_years({lo}-{hi})"), |o, _| o.year >= lo && o.year <= hi)
}

/// Keep only observations with age inside `window`; persons left with no
/// observations are dropped and counted.
pub fn restrict_window(panel: &Panel, window: AgeWindow) -> Result<TransformReport> {
    if window.lo < panel.meta.age_min || window.hi > panel.meta.age_max {
        return Err(Error::InvalidInput(format!(
            "window {window} outside panel bounds {}-{}",
            panel.meta.age_min, panel.meta.age_max
        )));
    }
    retain_obs(panel, &format!("restrict_window({window})"), |o, _| window.contains(o.age))
}

fn retain_obs<F>(panel: &Panel, note: &str, keep: F) -> Result<TransformReport>
where
    F: Fn(&IncomeObs, &PersonRecord) -> bool,
{
    let mut kept_any = vec![false; panel.n_persons()];
    let mut obs: Vec<IncomeObs> = Vec::new();
    for o in panel.obs() {
        if keep(o, &panel.persons()[o.person as usize]) {
            kept_any[o.person as usize] = true;
            obs.push(*o);
        }
    }
    if obs.is_empty() {
        return Err(Error::EmptySample(format!("{note} removed every observation")));
    }
    let mut new_index = vec![u32::MAX; panel.n_persons()];
    let mut persons = Vec::new();
    for (i, p) in panel.persons().iter().enumerate() {
        if kept_any[i] {
            new_index[i] = persons.len() as u32;
            persons.push(p.clone());
        }
    }
    let dropped = panel.n_persons() - persons.len();
    for o in &mut obs {
        o.person = new_index[o.person as usize];
    }
    Ok(TransformReport { panel: panel.derived(persons, obs, note)?, dropped_persons: dropped })
}

/// How `split_young_old` forms pseudo-persons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Each person is assigned to one side with probability 1/2 (seeded).
    RandomAssign,
    /// Each person becomes two pseudo-persons, one per side, sharing
    /// covariates and true lifetime income.
    Duplicate,
}

/// Split each profile at `threshold_age`: "young" keeps ages <= threshold,
/// "old" keeps ages > threshold. Persons with no observation on their side
/// are dropped and counted.
pub fn split_young_old(
    panel: &Panel,
    threshold_age: u16,
    mode: SplitMode,
    seed: u64,
) -> Result<TransformReport> {
    if threshold_age < panel.meta.age_min || threshold_age >= panel.meta.age_max {
        return Err(Error::InvalidInput(format!(
            "threshold {threshold_age} not strictly inside bounds {}-{}",
            panel.meta.age_min, panel.meta.age_max
        )));
    }
    let note = format!("split_young_old({threshold_age}, {mode:?}, seed={seed})");
    match mode {
        SplitMode::RandomAssign => {
            let tags: Vec<GroupTag> = (0..panel.n_persons())
                .map(|i| {
                    if substream(seed, "split", i as u64).random::<bool>() {
                        GroupTag::Young
                    } else {
                        GroupTag::Old
                    }
                })
                .collect();
            let mut persons = panel.persons().to_vec();
            for (p, t) in persons.iter_mut().zip(&tags) {
                p.group_tag = Some(*t);
            }
            let tagged = Panel::new(persons, panel.obs().to_vec(), panel.meta.clone())?;
            retain_obs(&tagged, &note, |o, p| match p.group_tag {
                Some(GroupTag::Young) => o.age <= threshold_age,
                Some(GroupTag::Old) => o.age > threshold_age,
                None => unreachable!(),
            })
        }
        SplitMode::Duplicate => {
            let mut persons = Vec::with_capacity(panel.n_persons() * 2);
            let mut obs = Vec::with_capacity(panel.n_obs());
            let mut dropped = 0usize;
            for (i, p) in panel.persons().iter().enumerate() {
                let rows = panel.obs_for(i);
                let young: Vec<&IncomeObs> = rows.iter().filter(|o| o.age <= threshold_age).collect();
                let old: Vec<&IncomeObs> = rows.iter().filter(|o| o.age > threshold_age).collect();
                for (side, tag) in [(&young, GroupTag::Young), (&old, GroupTag::Old)] {
                    if side.is_empty() {
                        dropped += 1;
                        continue;
                    }
                    let mut clone = p.clone();
                    clone.person_id = format!("{}:{}", p.person_id, if tag == GroupTag::Young { "y" } else { "o" });
                    clone.group_tag = Some(tag);
                    let idx = persons.len() as u32;
                    persons.push(clone);
                    for o in side {
                        obs.push(IncomeObs { person: idx, ..**o });
                    }
                }
            }
            let panel = panel.derived(persons, obs, &note)?;
            Ok(TransformReport { panel, dropped_persons: dropped })
        }
    }
}

/// Demean log incomes by calendar-year means (re-centered to the grand mean)
/// and return a new panel in levels.
pub fn remove_year_effects(panel: &Panel) -> Result<Panel> {
    let mut sums: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
    let mut grand = 0.0;
    for o in panel.obs() {
        if o.income_level <= 0.0 {
            return Err(Error::NonpositiveIncome {
                person_id: panel.persons()[o.person as usize].person_id.clone(),
                age: o.age,
            });
        }
        let l = o.income_level.ln();
        let e = sums.entry(o.year).or_insert((0.0, 0));
        e.0 += l;
        e.1 += 1;
        grand += l;
    }
    let grand_mean = grand / panel.n_obs() as f64;
    let year_means: BTreeMap<i32, f64> =
        sums.into_iter().map(|(y, (s, n))| (y, s / n as f64)).collect();
    let obs = panel
        .obs()
        .iter()
        .map(|o| IncomeObs {
            income_level: (o.income_level.ln() - year_means[&o.year] + grand_mean).exp(),
            ..*o
        })
        .collect();
    panel.derived(panel.persons().to_vec(), obs, "remove_year_effects")
}

// ---------------------------------------------------------------------------
// Two-step parental income construction
// ---------------------------------------------------------------------------

/// Options for predicting father income at a common age from a capped number
/// of annual observations.
#[derive(Debug, Clone)]
pub struct ParentIncomeOptions {
    pub n_obs_max: usize,
    pub age_range: AgeWindow,
    pub target_age: u16,
    pub seed: u64,
}

impl Default for ParentIncomeOptions {
    fn default() -> Self {
        ParentIncomeOptions {
            n_obs_max: 5,
            age_range: AgeWindow { lo: 40, hi: 55 },
            target_age: 50,
            seed: 0,
        }
    }
}

/// Predicted log income at the target age for one father.
#[derive(Debug, Clone, Copy)]
pub struct ParentIncomePrediction {
    pub predicted_log_income: f64,
    pub n_obs_used: usize,
    /// True when the father had fewer than two usable observations and the
    /// prediction fell back to the person mean.
    pub mean_fallback: bool,
}

/// Predict log income at `target_age` for each father: randomly select up to
/// `n_obs_max` observations inside `age_range`, fit pooled OLS of log income
/// on father fixed effects plus a cohort-by-education quadratic age
/// polynomial, and evaluate the fitted profile at the target age.
pub fn build_parent_income(
    fathers: &Panel,
    opts: &ParentIncomeOptions,
) -> Result<BTreeMap<String, ParentIncomePrediction>> {
    use crate::regression::solve::least_squares;

    // Select observations per father (seeded, without replacement).
    let mut selected: Vec<(usize, &IncomeObs)> = Vec::new();
    let mut n_selected = vec![0usize; fathers.n_persons()];
    for i in 0..fathers.n_persons() {
        let in_range: Vec<&IncomeObs> = fathers
            .obs_for(i)
            .iter()
            .filter(|o| opts.age_range.contains(o.age) && o.income_level > 0.0)
            .collect();
        let mut chosen: Vec<&IncomeObs> = in_range.clone();
        if in_range.len() > opts.n_obs_max {
            let mut rng = substream(opts.seed, "parent-income", i as u64);
            let mut idx: Vec<usize> = (0..in_range.len()).collect();
            // Partial Fisher-Yates for the first n_obs_max picks.
            for k in 0..opts.n_obs_max {
                let j = rng.random_range(k..idx.len());
                idx.swap(k, j);
            }
            idx.truncate(opts.n_obs_max);
            idx.sort_unstable();
            chosen = idx.into_iter().map(|k| in_range[k]).collect();
        }
        n_selected[i] = chosen.len();
        for o in chosen {
            selected.push((i, o));
        }
    }
    if selected.is_empty() {
        return Err(Error::EmptySample("no father has observations in the age range".into()));
    }

    // Cohort-by-education cells.
    let mut cells: Vec<(i32, u8)> = fathers
        .persons()
        .iter()
        .map(|p| (p.cohort, p.educ_group))
        .collect();
    cells.sort_unstable();
    cells.dedup();
    let cell_of = |p: &PersonRecord| cells.binary_search(&(p.cohort, p.educ_group)).unwrap();

    // Fathers entering the pooled fit: >= 2 selected observations.
    let fit_fathers: Vec<usize> =
        (0..fathers.n_persons()).filter(|&i| n_selected[i] >= 2).collect();
    let father_pos: HashMap<usize, usize> =
        fit_fathers.iter().enumerate().map(|(k, &i)| (i, k)).collect();

    let age_center = f64::from(opts.age_range.lo + opts.age_range.hi) / 2.0;
    let p_cols = 2 * cells.len();
    let rows: Vec<(usize, f64, f64)> = selected
        .iter()
        .filter(|(i, _)| father_pos.contains_key(i))
        .map(|(i, o)| (*i, f64::from(o.age) - age_center, o.income_level.ln()))
        .collect();

    // Within-father demeaning of the cell-specific age polynomial columns.
    let n = rows.len();
    let mut x = vec![0.0; n * p_cols];
    let mut y = vec![0.0; n];
    for (r, (i, a, l)) in rows.iter().enumerate() {
        let c = cell_of(&fathers.persons()[*i]);
        x[r * p_cols + 2 * c] = *a;
        x[r * p_cols + 2 * c + 1] = a * a;
        y[r] = *l;
    }
    // Group means per father.
    let mut counts = vec![0usize; fit_fathers.len()];
    let mut xmean = vec![0.0; fit_fathers.len() * p_cols];
    let mut ymean = vec![0.0; fit_fathers.len()];
    for (r, (i, _, _)) in rows.iter().enumerate() {
        let g = father_pos[i];
        counts[g] += 1;
        ymean[g] += y[r];
        for c in 0..p_cols {
            xmean[g * p_cols + c] += x[r * p_cols + c];
        }
    }
    for g in 0..fit_fathers.len() {
        let k = counts[g] as f64;
        ymean[g] /= k;
        for c in 0..p_cols {
            xmean[g * p_cols + c] /= k;
        }
    }
    for (r, (i, _, _)) in rows.iter().enumerate() {
        let g = father_pos[i];
        y[r] -= ymean[g];
        for c in 0..p_cols {
            x[r * p_cols + c] -= xmean[g * p_cols + c];
        }
    }
    // Cells whose columns are all zero after demeaning (e.g. a cell with no
    // within-father age variation) would be collinear; omit them.
    let mut live: Vec<usize> = Vec::new();
    for c in 0..p_cols {
        let norm: f64 = (0..n).map(|r| x[r * p_cols + c] * x[r * p_cols + c]).sum();
        if norm > 1e-18 {
            live.push(c);
        }
    }
    let names: Vec<String> = live
        .iter()
        .map(|&c| format!("cell{}_{}", c / 2, if c % 2 == 0 { "age" } else { "age2" }))
        .collect();
    let mut xl = vec![0.0; n * live.len()];
    for r in 0..n {
        for (k, &c) in live.iter().enumerate() {
            xl[r * live.len() + k] = x[r * p_cols + c];
        }
    }
    let beta_live = if live.is_empty() {
        Vec::new()
    } else {
        least_squares(&xl, &y, live.len(), &names)?.beta
    };
    let mut beta = vec![0.0; p_cols];
    for (k, &c) in live.iter().enumerate() {
        beta[c] = beta_live[k];
    }

    // Father effects and predictions at the target age.
    let mut out = BTreeMap::new();
    let t = f64::from(opts.target_age) - age_center;
    for i in 0..fathers.n_persons() {
        let person = &fathers.persons()[i];
        if let Some(&g) = father_pos.get(&i) {
            let c = cell_of(person);
            let fe = ymean[g]
                - xmean[g * p_cols + 2 * c] * beta[2 * c]
                - xmean[g * p_cols + 2 * c + 1] * beta[2 * c + 1];
            let pred = fe + beta[2 * c] * t + beta[2 * c + 1] * t * t;
            out.insert(
                person.person_id.clone(),
                ParentIncomePrediction {
                    predicted_log_income: pred,
                    n_obs_used: n_selected[i],
                    mean_fallback: false,
                },
            );
        } else {
            // < 2 usable observations: fall back to the person mean.
            let vals: Vec<f64> = fathers
                .obs_for(i)
                .iter()
                .filter(|o| o.income_level > 0.0)
                .map(|o| o.income_level.ln())
                .collect();
            if vals.is_empty() {
                continue;
            }
            out.insert(
                person.person_id.clone(),
                ParentIncomePrediction {
                    predicted_log_income: vals.iter().sum::<f64>() / vals.len() as f64,
                    n_obs_used: vals.len().min(1),
                    mean_fallback: true,
                },
            );
        }
    }
    Ok(out)
}

/// Log lifetime income: log of the sum of level incomes over the person's
/// observations.
pub fn true_lifetime(obs: &[IncomeObs]) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::EmptySample("no observations for lifetime income".into()));
    }
    let mut sum = 0.0;
    for o in obs {
        if o.income_level <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "nonpositive level income {} at age {}",
                o.income_level, o.age
            )));
        }
        sum += o.income_level;
    }
    Ok(sum.ln())
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    /// A deterministic small panel: person i has educ i % 4, parent log
    /// income rising in i, and a noise-free log-linear income profile.
    pub(crate) fn small_panel(n: usize, age_lo: u16, age_hi: u16) -> Panel {
        let persons = (0..n)
            .map(|i| PersonRecord {
                person_id: format!("p{i}"),
                family_id: format!("f{i}"),
                cohort: 1955 + (i % 3) as i32,
                sex: 1,
                educ_group: (i % 4) as u8,
                parent_educ_group: ((i / 2) % 4) as u8,
                parent_log_income: Some(11.5 + 0.2 * (i % 7) as f64),
                true_log_lifetime: None,
                group_tag: None,
                extras: BTreeMap::new(),
            })
            .collect();
        let mut obs = Vec::new();
        for p in 0..n as u32 {
            for age in age_lo..=age_hi {
                let h = f64::from(age - age_lo);
                obs.push(IncomeObs {
                    person: p,
                    year: 1955 + (p % 3) as i32 + i32::from(age),
                    age,
                    income_level: (11.0 + 0.03 * h + 0.01 * p as f64).exp(),
                });
            }
        }
        Panel::new(
            persons,
            obs,
            PanelMeta { age_min: age_lo, age_max: age_hi.max(58), educ_groups: 4, transforms: vec![] },
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_panel() -> Panel {
        let persons = (0..4)
            .map(|i| PersonRecord {
                person_id: format!("p{i}"),
                family_id: format!("f{i}"),
                cohort: 1955,
                sex: 1,
                educ_group: (i % 4) as u8,
                parent_educ_group: 0,
                parent_log_income: Some(12.0 + 0.1 * i as f64),
                true_log_lifetime: None,
                group_tag: None,
                extras: BTreeMap::new(),
            })
            .collect();
        let mut obs = Vec::new();
        for p in 0..4u32 {
            for age in 25..=30u16 {
                obs.push(IncomeObs {
                    person: p,
                    year: 1955 + age as i32,
                    age,
                    income_level: 100_000.0 + 1000.0 * f64::from(age) + 500.0 * p as f64,
                });
            }
        }
        Panel::new(
            persons,
            obs,
            PanelMeta { age_min: 25, age_max: 58, educ_groups: 4, transforms: vec![] },
        )
        .unwrap()
    }

    #[test]
    fn duplicate_person_age_rejected() {
        let p = toy_panel();
        let mut obs = p.obs().to_vec();
        obs.push(obs[0]);
        let err = Panel::new(p.persons().to_vec(), obs, p.meta.clone()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn bottom_code_floors_and_counts() {
        let p = toy_panel();
        let (coded, affected) = bottom_code(&p, 126_000.0).unwrap();
        assert!(affected > 0);
        assert!(coded.obs().iter().all(|o| o.income_level >= 126_000.0));
        // Boundary: exactly equal stays.
        let (same, n) = bottom_code(&p, 1.0).unwrap();
        assert_eq!(n, 0);
        assert_eq!(same.obs().len(), p.obs().len());
    }

    #[test]
    fn restrict_window_composition() {
        let p = toy_panel();
        let a = restrict_window(&p, AgeWindow { lo: 25, hi: 28 }).unwrap().panel;
        let b = restrict_window(&a, AgeWindow { lo: 25, hi: 26 }).unwrap().panel;
        let direct = restrict_window(&p, AgeWindow { lo: 25, hi: 26 }).unwrap().panel;
        assert_eq!(b.n_obs(), direct.n_obs());
        for (x, y) in b.obs().iter().zip(direct.obs()) {
            assert_eq!(x.age, y.age);
            assert_eq!(x.income_level, y.income_level);
        }
    }

    #[test]
    fn split_duplicate_partitions() {
        let p = toy_panel();
        let out = split_young_old(&p, 27, SplitMode::Duplicate, 1).unwrap();
        assert_eq!(out.panel.n_persons(), 8);
        assert_eq!(out.panel.n_obs(), p.n_obs());
        assert_eq!(out.dropped_persons, 0);
    }

    #[test]
    fn split_random_assign_is_deterministic() {
        let p = toy_panel();
        let a = split_young_old(&p, 27, SplitMode::RandomAssign, 7).unwrap().panel;
        let b = split_young_old(&p, 27, SplitMode::RandomAssign, 7).unwrap().panel;
        assert_eq!(a.n_persons(), b.n_persons());
        for (x, y) in a.persons().iter().zip(b.persons()) {
            assert_eq!(x.group_tag, y.group_tag);
        }
    }

    #[test]
    fn year_effects_injection_recovered() {
        let p = toy_panel();
        // Inject a pure year shock.
        let shocked_obs: Vec<IncomeObs> = p
            .obs()
            .iter()
            .map(|o| IncomeObs {
                income_level: o.income_level * ((o.year % 3) as f64 * 0.2).exp(),
                ..*o
            })
            .collect();
        let shocked = Panel::new(p.persons().to_vec(), shocked_obs, p.meta.clone()).unwrap();
        let cleaned = remove_year_effects(&shocked).unwrap();
        let base = remove_year_effects(&p).unwrap();
        // Same panel up to a constant in logs: compare demeaned logs.
        let logs = |pl: &Panel| -> Vec<f64> {
            let v: Vec<f64> = pl.obs().iter().map(|o| o.income_level.ln()).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.into_iter().map(|x| x - m).collect()
        };
        for (a, b) in logs(&cleaned).iter().zip(logs(&base)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn true_lifetime_examples() {
        let mk = |levels: &[f64]| -> Vec<IncomeObs> {
            levels
                .iter()
                .enumerate()
                .map(|(i, &l)| IncomeObs {
                    person: 0,
                    year: 2000 + i as i32,
                    age: 25 + i as u16,
                    income_level: l,
                })
                .collect()
        };
        assert!((true_lifetime(&mk(&[100.0, 300.0])).unwrap() - 400f64.ln()).abs() < 1e-15);
        let c = 12_345.0;
        let t = 7;
        let obs = mk(&vec![c; t]);
        assert!((true_lifetime(&obs).unwrap() - (t as f64 * c).ln()).abs() < 1e-12);
        assert!(true_lifetime(&[]).is_err());
        assert!(true_lifetime(&mk(&[10.0, -1.0])).is_err());
    }
}
