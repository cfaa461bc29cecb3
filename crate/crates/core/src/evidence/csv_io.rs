use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::{
    AdArm, BiasDirection, DataFormat, Design, EvidenceError, EvidenceNetwork, IpdRecord, RobLevel,
    Study, StudyData, Treatment, TreatmentId,
};
use crate::density::BetaPrior;

/// Locations of the network tables.
#[derive(Debug, Clone)]
pub struct NetworkPaths {
    pub treatments: PathBuf,
    pub studies: PathBuf,
    pub ipd: PathBuf,
    pub ad: PathBuf,
    pub directions: Option<PathBuf>,
}

impl NetworkPaths {
    /// The conventional file names inside one directory; `directions.csv`
    /// is picked up only if it exists.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let directions = dir.join("directions.csv");
        Self {
            treatments: dir.join("treatments.csv"),
            studies: dir.join("studies.csv"),
            ipd: dir.join("ipd.csv"),
            ad: dir.join("ad.csv"),
            directions: directions.exists().then_some(directions),
        }
    }

    pub fn all(&self) -> Vec<&Path> {
        let mut v = vec![
            self.treatments.as_path(),
            self.studies.as_path(),
            self.ipd.as_path(),
            self.ad.as_path(),
        ];
        if let Some(d) = &self.directions {
            v.push(d.as_path());
        }
        v
    }
}

struct Table {
    file: String,
    headers: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, EvidenceError> {
        let file = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| EvidenceError::Io {
            path: file.clone(),
            source,
        })?;
        if text.trim().is_empty() {
            return Ok(Self { file, headers: vec![], rows: vec![] });
        }
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|source| EvidenceError::Csv { file: file.clone(), source })?
            .iter()
            .map(|h| h.trim_start_matches('\u{feff}').to_string())
            .collect::<Vec<_>>();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|source| EvidenceError::Csv { file: file.clone(), source })?;
            rows.push((i + 2, rec.iter().map(str::to_string).collect()));
        }
        Ok(Self { file, headers, rows })
    }

    fn col(&self, name: &str) -> Result<usize, EvidenceError> {
        self.opt_col(name).ok_or_else(|| EvidenceError::Schema {
            file: self.file.clone(),
            message: format!("missing column '{name}'"),
        })
    }

    fn opt_col(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h.eq_ignore_ascii_case(name))
    }

    /// Columns named `<prefix>1`, `<prefix>2`, ... in numeric order.
    fn numbered(&self, prefix: &str) -> Vec<usize> {
        let mut found: Vec<(usize, usize)> = self
            .headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| {
                let rest = h.strip_prefix(prefix)?;
                let n: usize = rest.parse().ok()?;
                Some((n, i))
            })
            .collect();
        found.sort();
        found.into_iter().map(|(_, i)| i).collect()
    }

    fn row_err(&self, row: usize, message: impl Into<String>) -> EvidenceError {
        EvidenceError::Row { file: self.file.clone(), row, message: message.into() }
    }

    fn ref_err(&self, row: usize, message: impl Into<String>) -> EvidenceError {
        EvidenceError::Referential { file: self.file.clone(), row, message: message.into() }
    }
}

fn cell<'a>(t: &Table, row: usize, rec: &'a [String], col: usize) -> Result<&'a str, EvidenceError> {
    rec.get(col)
        .map(String::as_str)
        .ok_or_else(|| t.row_err(row, format!("missing value for '{}'", t.headers[col])))
}

fn parse<T: std::str::FromStr>(t: &Table, row: usize, rec: &[String], col: usize) -> Result<T, EvidenceError> {
    let v = cell(t, row, rec, col)?;
    v.parse()
        .map_err(|_| t.row_err(row, format!("cannot parse '{}' in column '{}'", v, t.headers[col])))
}

fn parse_bool(t: &Table, row: usize, v: &str) -> Result<bool, EvidenceError> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "t" => Ok(true),
        "0" | "false" | "no" | "f" => Ok(false),
        _ => Err(t.row_err(row, format!("invalid boolean '{v}'"))),
    }
}

fn resolve_treatment(
    t: &Table,
    row: usize,
    v: &str,
    treatments: &[Treatment],
) -> Result<TreatmentId, EvidenceError> {
    if let Ok(id) = v.parse::<TreatmentId>() {
        if treatments.iter().any(|tr| tr.id == id) {
            return Ok(id);
        }
    } else if let Some(tr) = treatments.iter().find(|tr| tr.label.eq_ignore_ascii_case(v)) {
        return Ok(tr.id);
    }
    Err(t.ref_err(row, format!("unknown treatment '{v}'")))
}

struct StudyMeta {
    row: usize,
    id: String,
    design: Design,
    format: DataFormat,
    rob: RobLevel,
    reference_arm: TreatmentId,
    z: Vec<f64>,
    bias_prior: Option<BetaPrior>,
}

/// Load and link the CSV tables into a network.
///
/// Structural invariants (referential integrity, `r <= n`, unique ids,
/// one AD row per arm) are enforced here; connectivity and arm counts are
/// left to [`validate_network`](super::validate_network).
pub fn load_network(paths: &NetworkPaths) -> Result<EvidenceNetwork, EvidenceError> {
    let treatments = load_treatments(&Table::read(&paths.treatments)?)?;
    let studies_t = Table::read(&paths.studies)?;
    let metas = load_study_meta(&studies_t, &treatments)?;
    let ipd_t = Table::read(&paths.ipd)?;
    let ad_t = Table::read(&paths.ad)?;

    let p_ipd = ipd_t.numbered("x").len();
    let p_ad = ad_t.numbered("xbar").len();
    let n_covariates = match (ipd_t.rows.is_empty(), ad_t.rows.is_empty()) {
        (false, true) => p_ipd,
        (true, false) => p_ad,
        _ => p_ipd.max(p_ad),
    };
    if !ipd_t.rows.is_empty() && p_ipd < n_covariates {
        return Err(EvidenceError::Schema {
            file: ipd_t.file.clone(),
            message: format!("expected covariate columns x1..x{n_covariates}"),
        });
    }

    let index: HashMap<&str, usize> = metas.iter().enumerate().map(|(i, m)| (m.id.as_str(), i)).collect();
    let mut ipd_rows: Vec<Vec<IpdRecord>> = vec![Vec::new(); metas.len()];
    let mut ad_rows: Vec<Vec<AdArm>> = vec![Vec::new(); metas.len()];
    let mut arm_order: Vec<Vec<TreatmentId>> = vec![Vec::new(); metas.len()];

    if !ipd_t.rows.is_empty() {
        let (cs, ct, cy) = (ipd_t.col("study")?, ipd_t.col("treatment")?, ipd_t.col("y")?);
        let xs = ipd_t.numbered("x");
        for (row, rec) in &ipd_t.rows {
            let row = *row;
            let sid = cell(&ipd_t, row, rec, cs)?;
            let j = *index
                .get(sid)
                .ok_or_else(|| ipd_t.ref_err(row, format!("unknown study '{sid}'")))?;
            if metas[j].format != DataFormat::Ipd {
                return Err(ipd_t.ref_err(row, format!("study '{sid}' is not declared IPD")));
            }
            let trt = resolve_treatment(&ipd_t, row, cell(&ipd_t, row, rec, ct)?, &treatments)?;
            let y = match cell(&ipd_t, row, rec, cy)? {
                "1" => true,
                "0" => false,
                other => return Err(ipd_t.row_err(row, format!("outcome must be 0 or 1, got '{other}'"))),
            };
            let mut x = Vec::with_capacity(xs.len());
            for &c in &xs {
                let v: f64 = parse(&ipd_t, row, rec, c)?;
                if !v.is_finite() {
                    return Err(ipd_t.row_err(row, "covariates must be finite"));
                }
                x.push(v);
            }
            if !arm_order[j].contains(&trt) {
                arm_order[j].push(trt);
            }
            ipd_rows[j].push(IpdRecord { treatment: trt, y, x });
        }
    }

    if !ad_t.rows.is_empty() {
        let (cs, ct, cr, cn) = (ad_t.col("study")?, ad_t.col("treatment")?, ad_t.col("r")?, ad_t.col("n")?);
        let xs = ad_t.numbered("xbar");
        for (row, rec) in &ad_t.rows {
            let row = *row;
            let sid = cell(&ad_t, row, rec, cs)?;
            let j = *index
                .get(sid)
                .ok_or_else(|| ad_t.ref_err(row, format!("unknown study '{sid}'")))?;
            if metas[j].format != DataFormat::Ad {
                return Err(ad_t.ref_err(row, format!("study '{sid}' is not declared AD")));
            }
            let trt = resolve_treatment(&ad_t, row, cell(&ad_t, row, rec, ct)?, &treatments)?;
            let r: u64 = parse(&ad_t, row, rec, cr)?;
            let n: u64 = parse(&ad_t, row, rec, cn)?;
            if n < 1 {
                return Err(ad_t.ref_err(row, "sample size n must be at least 1"));
            }
            if r > n {
                return Err(ad_t.ref_err(row, format!("events r={r} exceed sample size n={n}")));
            }
            if arm_order[j].contains(&trt) {
                return Err(ad_t.ref_err(row, format!("duplicate arm {trt} in study '{sid}'")));
            }
            let mut xbar = Vec::with_capacity(n_covariates);
            for c in 0..n_covariates {
                match xs.get(c).map(|&col| cell(&ad_t, row, rec, col)).transpose()? {
                    None | Some("") => xbar.push(None),
                    Some(v) => {
                        let v: f64 = v
                            .parse()
                            .map_err(|_| ad_t.row_err(row, format!("cannot parse mean covariate '{v}'")))?;
                        xbar.push(Some(v));
                    }
                }
            }
            arm_order[j].push(trt);
            ad_rows[j].push(AdArm { treatment: trt, r, n, xbar });
        }
    }

    let mut directions: Vec<BTreeMap<TreatmentId, BiasDirection>> = vec![BTreeMap::new(); metas.len()];
    if let Some(path) = &paths.directions {
        let t = Table::read(path)?;
        if !t.rows.is_empty() {
            let (cs, cb, ck, cd) = (t.col("study")?, t.col("treatment_b")?, t.col("treatment_k")?, t.col("dir")?);
            for (row, rec) in &t.rows {
                let row = *row;
                let sid = cell(&t, row, rec, cs)?;
                let j = *index
                    .get(sid)
                    .ok_or_else(|| t.ref_err(row, format!("unknown study '{sid}'")))?;
                let b = resolve_treatment(&t, row, cell(&t, row, rec, cb)?, &treatments)?;
                let k = resolve_treatment(&t, row, cell(&t, row, rec, ck)?, &treatments)?;
                let dir: BiasDirection = parse(&t, row, rec, cd)?;
                let reference = metas[j].reference_arm;
                let (arm, dir) = if b == reference {
                    (k, dir)
                } else if k == reference {
                    (b, dir.flipped())
                } else {
                    return Err(t.ref_err(row, "direction must involve the study reference arm"));
                };
                if !arm_order[j].contains(&arm) {
                    return Err(t.ref_err(row, format!("treatment {arm} is not an arm of '{sid}'")));
                }
                directions[j].insert(arm, dir);
            }
        }
    }

    let mut studies = Vec::with_capacity(metas.len());
    for (j, meta) in metas.into_iter().enumerate() {
        let arms = std::mem::take(&mut arm_order[j]);
        if arms.is_empty() {
            return Err(studies_t.ref_err(meta.row, format!("study '{}' has no data rows", meta.id)));
        }
        if !arms.contains(&meta.reference_arm) {
            return Err(studies_t.ref_err(
                meta.row,
                format!("reference arm {} is not an arm of study '{}'", meta.reference_arm, meta.id),
            ));
        }
        let data = match meta.format {
            DataFormat::Ipd => StudyData::Ipd(std::mem::take(&mut ipd_rows[j])),
            DataFormat::Ad => StudyData::Ad(std::mem::take(&mut ad_rows[j])),
        };
        studies.push(Study {
            id: meta.id,
            design: meta.design,
            rob: meta.rob,
            reference_arm: meta.reference_arm,
            arms,
            directions: std::mem::take(&mut directions[j]),
            z: meta.z,
            bias_prior: meta.bias_prior,
            data,
        });
    }

    let reference = EvidenceNetwork::default_reference(&treatments).ok_or_else(|| EvidenceError::Schema {
        file: paths.treatments.display().to_string(),
        message: "no treatments".into(),
    })?;
    let n_study_covariates = studies_t.numbered("z").len();
    Ok(EvidenceNetwork {
        treatments,
        studies,
        reference,
        centers: vec![0.0; n_covariates],
        n_covariates,
        n_study_covariates,
    })
}

fn load_treatments(t: &Table) -> Result<Vec<Treatment>, EvidenceError> {
    let (ci, cl, ca) = (t.col("id")?, t.col("label")?, t.col("is_active")?);
    let mut out: Vec<Treatment> = Vec::with_capacity(t.rows.len());
    let mut labels = HashSet::new();
    for (row, rec) in &t.rows {
        let id: TreatmentId = parse(t, *row, rec, ci)?;
        let label = cell(t, *row, rec, cl)?.to_string();
        let is_active = parse_bool(t, *row, cell(t, *row, rec, ca)?)?;
        if !labels.insert(label.to_ascii_lowercase()) {
            return Err(t.row_err(*row, format!("duplicate treatment label '{label}'")));
        }
        if out.iter().any(|tr| tr.id == id) {
            return Err(t.row_err(*row, format!("duplicate treatment id {id}")));
        }
        out.push(Treatment { id, label, is_active });
    }
    let mut ids: Vec<TreatmentId> = out.iter().map(|t| t.id).collect();
    ids.sort_unstable();
    if ids.iter().enumerate().any(|(i, &id)| id as usize != i + 1) {
        return Err(EvidenceError::Schema {
            file: t.file.clone(),
            message: "treatment ids must be dense 1..K".into(),
        });
    }
    Ok(out)
}

fn load_study_meta(t: &Table, treatments: &[Treatment]) -> Result<Vec<StudyMeta>, EvidenceError> {
    let (ci, cd, cf, cr, cref) = (t.col("id")?, t.col("design")?, t.col("format")?, t.col("rob")?, t.col("ref_arm")?);
    let zs = t.numbered("z");
    let (ca1, ca2) = (t.opt_col("bias_a1"), t.opt_col("bias_a2"));
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(t.rows.len());
    for (row, rec) in &t.rows {
        let row = *row;
        let id = cell(t, row, rec, ci)?.to_string();
        if !seen.insert(id.clone()) {
            return Err(EvidenceError::DuplicateStudy { file: t.file.clone(), row, id });
        }
        let design = parse(t, row, rec, cd)?;
        let format = parse(t, row, rec, cf)?;
        let rob = parse(t, row, rec, cr)?;
        let reference_arm = resolve_treatment(t, row, cell(t, row, rec, cref)?, treatments)?;
        let mut z = Vec::with_capacity(zs.len());
        for &c in &zs {
            z.push(parse::<f64>(t, row, rec, c)?);
        }
        let a1 = ca1.map(|c| cell(t, row, rec, c)).transpose()?.filter(|v| !v.is_empty());
        let a2 = ca2.map(|c| cell(t, row, rec, c)).transpose()?.filter(|v| !v.is_empty());
        let bias_prior = match (a1, a2) {
            (None, None) => None,
            (Some(a), Some(b)) => {
                let prior = BetaPrior::new(
                    a.parse().map_err(|_| t.row_err(row, format!("invalid bias_a1 '{a}'")))?,
                    b.parse().map_err(|_| t.row_err(row, format!("invalid bias_a2 '{b}'")))?,
                );
                if !prior.is_valid() {
                    return Err(t.row_err(row, "bias prior parameters must be positive"));
                }
                Some(prior)
            }
            _ => return Err(t.row_err(row, "bias_a1 and bias_a2 must be given together")),
        };
        out.push(StudyMeta { row, id, design, format, rob, reference_arm, z, bias_prior });
    }
    Ok(out)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn write_file(path: &Path, text: String) -> Result<(), EvidenceError> {
    fs::write(path, text).map_err(|source| EvidenceError::Io { path: path.display().to_string(), source })
}

fn csv_text(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<String, EvidenceError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |source| EvidenceError::Csv { file: "<export>".into(), source };
    w.write_record(&header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| EvidenceError::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Write the network as the five CSV tables in `dir`.
///
/// Covariates are written as stored, i.e. on the current (possibly
/// centered) scale.
pub fn export_network(net: &EvidenceNetwork, dir: impl AsRef<Path>) -> Result<NetworkPaths, EvidenceError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| EvidenceError::Io { path: dir.display().to_string(), source })?;
    let paths = NetworkPaths {
        treatments: dir.join("treatments.csv"),
        studies: dir.join("studies.csv"),
        ipd: dir.join("ipd.csv"),
        ad: dir.join("ad.csv"),
        directions: Some(dir.join("directions.csv")),
    };

    let rows = net
        .treatments
        .iter()
        .map(|t| vec![t.id.to_string(), t.label.clone(), t.is_active.to_string()])
        .collect();
    write_file(&paths.treatments, csv_text(vec!["id".into(), "label".into(), "is_active".into()], rows)?)?;

    let with_bias = net.studies.iter().any(|s| s.bias_prior.is_some());
    let mut header: Vec<String> = ["id", "design", "format", "rob", "ref_arm"].map(String::from).to_vec();
    header.extend((1..=net.n_study_covariates).map(|i| format!("z{i}")));
    if with_bias {
        header.extend(["bias_a1".to_string(), "bias_a2".to_string()]);
    }
    let rows = net
        .studies
        .iter()
        .map(|s| {
            let mut r = vec![
                s.id.clone(),
                s.design.to_string(),
                s.format().to_string(),
                s.rob.to_string(),
                s.reference_arm.to_string(),
            ];
            r.extend(s.z.iter().map(|&v| num(v)));
            if with_bias {
                match s.bias_prior {
                    Some(p) => r.extend([num(p.a), num(p.b)]),
                    None => r.extend([String::new(), String::new()]),
                }
            }
            r
        })
        .collect();
    write_file(&paths.studies, csv_text(header, rows)?)?;

    let mut header: Vec<String> = ["study", "treatment", "y"].map(String::from).to_vec();
    header.extend((1..=net.n_covariates).map(|i| format!("x{i}")));
    let mut rows = Vec::new();
    for s in &net.studies {
        if let StudyData::Ipd(recs) = &s.data {
            for rec in recs {
                let mut r = vec![s.id.clone(), rec.treatment.to_string(), u8::from(rec.y).to_string()];
                r.extend(rec.x.iter().map(|&v| num(v)));
                rows.push(r);
            }
        }
    }
    write_file(&paths.ipd, csv_text(header, rows)?)?;

    let mut header: Vec<String> = ["study", "treatment", "r", "n"].map(String::from).to_vec();
    header.extend((1..=net.n_covariates).map(|i| format!("xbar{i}")));
    let mut rows = Vec::new();
    for s in &net.studies {
        if let StudyData::Ad(arms) = &s.data {
            for a in arms {
                let mut r = vec![s.id.clone(), a.treatment.to_string(), a.r.to_string(), a.n.to_string()];
                r.extend(a.xbar.iter().map(|v| v.map(num).unwrap_or_default()));
                rows.push(r);
            }
        }
    }
    write_file(&paths.ad, csv_text(header, rows)?)?;

    let mut rows = Vec::new();
    for s in &net.studies {
        for (&k, &dir) in &s.directions {
            rows.push(vec![s.id.clone(), s.reference_arm.to_string(), k.to_string(), dir.to_string()]);
        }
    }
    let header = ["study", "treatment_b", "treatment_k", "dir"].map(String::from).to_vec();
    write_file(paths.directions.as_ref().expect("set above"), csv_text(header, rows)?)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn minimal(dir: &Path) {
        write(dir, "treatments.csv", "id,label,is_active\n1,placebo,false\n2,drugA,true\n");
        write(dir, "studies.csv", "id,design,format,rob,ref_arm\nS1,RCT,IPD,low,1\n");
        write(dir, "ipd.csv", "study,treatment,y,x1\nS1,1,0,30\nS1,1,1,35\nS1,2,1,40\nS1,2,0,45\n");
        write(dir, "ad.csv", "");
    }

    #[test]
    fn empty_ad_and_single_ipd_study() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        let net = load_network(&NetworkPaths::in_dir(dir.path())).unwrap();
        assert_eq!(net.studies.len(), 1);
        assert_eq!(net.studies[0].arms, vec![1, 2]);
        assert_eq!(net.reference, 1);
        assert_eq!(net.n_covariates, 1);
        assert!(super::super::validate_network(&net).is_ok());
    }

    #[test]
    fn r_exceeding_n_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        write(dir.path(), "studies.csv", "id,design,format,rob,ref_arm\nS1,RCT,IPD,low,1\nS2,RCT,AD,high,1\n");
        write(dir.path(), "ad.csv", "study,treatment,r,n\nS2,1,3,10\nS2,2,12,10\n");
        let err = load_network(&NetworkPaths::in_dir(dir.path())).unwrap_err();
        match &err {
            EvidenceError::Referential { row, message, .. } => {
                assert_eq!(*row, 3);
                assert!(message.contains("r=12"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("ad.csv"));
    }

    #[test]
    fn missing_column_and_unknown_treatment() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        write(dir.path(), "ipd.csv", "study,treatment,x1\nS1,1,3\n");
        assert!(matches!(
            load_network(&NetworkPaths::in_dir(dir.path())),
            Err(EvidenceError::Schema { .. })
        ));
        write(dir.path(), "ipd.csv", "study,treatment,y\nS1,1,0\nS1,7,1\n");
        assert!(matches!(
            load_network(&NetworkPaths::in_dir(dir.path())),
            Err(EvidenceError::Referential { row: 3, .. })
        ));
    }

    #[test]
    fn duplicate_study_rejected() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        write(dir.path(), "studies.csv", "id,design,format,rob,ref_arm\nS1,RCT,IPD,low,1\nS1,RCT,IPD,low,1\n");
        assert!(matches!(
            load_network(&NetworkPaths::in_dir(dir.path())),
            Err(EvidenceError::DuplicateStudy { row: 3, .. })
        ));
    }

    #[test]
    fn directions_are_keyed_by_contrast_arm() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        write(dir.path(), "directions.csv", "study,treatment_b,treatment_k,dir\nS1,2,1,0\n");
        let net = load_network(&NetworkPaths::in_dir(dir.path())).unwrap();
        assert_eq!(net.studies[0].direction(2), BiasDirection::FavoursTreatment);
    }
}
