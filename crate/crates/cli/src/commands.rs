use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use ga_core::cohort::{
    load_manifest, render_manifest, split_patients, synthesize_cohort, write_media_tree, BiometryMeasurements,
    DirectorySource, MediaSource, Split, SplitAssignment, SynthConfig, SyntheticSource,
};
use ga_core::estimator::{weights, Modality, TrainConfig};
use ga_core::evalstats::{build_report, CiMethod, ReportSpec, StatsConfig, SubgroupContext};
use ga_core::formulae::{eval_formula, FormulaLibrary};
use ga_core::growth::{build_percentile_table, GrowthConfig};
use ga_core::imaging::ClipConfig;
use ga_core::pipeline::{
    merge_baselines, predict_visits, predictions_from_csv, predictions_to_csv, preprocess, train_model,
    PredictionRow, PreparedSet, ENSEMBLE_ID,
};
use ga_core::provenance::Provenance;
use ga_core::rng::derive_seed;

use crate::args::*;
use crate::output::{write_file, StagedDir};

/// Applies the keys of a JSON object file on top of `base`.
fn with_overrides<T: Serialize + DeserializeOwned>(base: T, path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(base) };
    let text = read_text(path)?;
    let patch: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", path.display()))?;
    let serde_json::Value::Object(patch) = patch else {
        bail!("{}: expected a JSON object", path.display());
    };
    let mut value = serde_json::to_value(base)?;
    for (k, v) in patch {
        match value.get_mut(&k) {
            Some(slot) => *slot = v,
            None => bail!("{}: unknown setting `{k}`", path.display()),
        }
    }
    serde_json::from_value(value).with_context(|| format!("{}: invalid settings", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn with_input(p: Provenance, path: &Path) -> Result<Provenance> {
    p.with_input(path).map_err(|e| anyhow!(e))
}

fn load_split(path: &Path) -> Result<SplitAssignment> {
    SplitAssignment::from_csv(&read_text(path)?).with_context(|| format!("{}", path.display()))
}

fn split_members(split: &SplitAssignment, which: Split) -> BTreeSet<String> {
    split
        .assignment
        .iter()
        .filter(|(_, s)| **s == which)
        .map(|(p, _)| p.clone())
        .collect()
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = with_overrides(SynthConfig::default(), a.config.as_deref())?;
    cfg.n_patients = a.n;
    cfg.rng_seed = a.seed;
    let cohort = synthesize_cohort(&cfg)?;
    let mut prov = Provenance::new("synth", Some(a.seed));
    if let Some(c) = &a.config {
        prov = with_input(prov, c)?;
    }
    let dir = StagedDir::new(&a.out)?;
    write_file(&dir.path().join("manifest.jsonl"), render_manifest(&cohort, Some(&prov)))?;
    let files = if a.no_media { 0 } else { write_media_tree(&cohort, dir.path(), a.seed)? };
    let out = dir.commit()?;
    println!(
        "wrote {} patients, {} visits, {files} media files to {}",
        cohort.patients.len(),
        cohort.n_visits(),
        out.display()
    );
    Ok(())
}

pub fn split(a: &SplitArgs) -> Result<()> {
    let cohort = load_manifest(&a.manifest)?;
    let ratios = (a.ratios[0], a.ratios[1], a.ratios[2]);
    let assignment = split_patients(&cohort, ratios, a.seed)?;
    let prov = with_input(Provenance::new("split", Some(a.seed)), &a.manifest)?;
    write_file(&a.out, assignment.to_csv(Some(&prov.header_line())))?;
    println!(
        "train {} / tune {} / test {}",
        assignment.count(Split::Train),
        assignment.count(Split::Tune),
        assignment.count(Split::Test)
    );
    Ok(())
}

pub fn preprocess_cmd(a: &PreprocessArgs) -> Result<()> {
    let cohort = load_manifest(&a.manifest)?;
    let base = match a.geometry {
        Geometry::Desk => ClipConfig::desk(),
        Geometry::Paper => ClipConfig::paper(),
    };
    let clip = with_overrides(base, a.config.as_deref())?;
    let mut prov = with_input(Provenance::new("preprocess", a.synthetic_seed), &a.manifest)?;
    let patients = match (&a.split, a.subset) {
        (Some(path), Some(subset)) => {
            prov = with_input(prov, path)?;
            let which = match subset {
                SubsetArg::Train => Split::Train,
                SubsetArg::Tune => Split::Tune,
                SubsetArg::Test => Split::Test,
            };
            Some(split_members(&load_split(path)?, which))
        }
        _ => None,
    };
    let dir_source;
    let synth_source;
    let source: &dyn MediaSource = match a.synthetic_seed {
        Some(seed) => {
            synth_source = SyntheticSource { seed };
            &synth_source
        }
        None => {
            let root = a.media.clone().unwrap_or_else(|| manifest_dir(&a.manifest));
            dir_source = DirectorySource::new(root);
            &dir_source
        }
    };
    let mut set = preprocess(&cohort, source, &clip, patients.as_ref())?;
    set.provenance = Some(prov.to_json());
    write_file(&a.out, set.encode())?;
    let items: usize = set.visits.iter().map(|v| v.items.len()).sum();
    println!("prepared {} visits, {items} model inputs", set.visits.len());
    Ok(())
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn preset_name(p: Preset) -> &'static str {
    match p {
        Preset::Desk => "desk",
        Preset::PaperImage => "paper-image",
        Preset::PaperVideo => "paper-video",
    }
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let modality = match (a.preset, a.modality) {
        (Preset::PaperImage, None | Some(ModalityArg::Image)) => Modality::Image,
        (Preset::PaperVideo, None | Some(ModalityArg::Video)) => Modality::Video,
        (Preset::Desk, Some(ModalityArg::Image)) => Modality::Image,
        (Preset::Desk, Some(ModalityArg::Video)) => Modality::Video,
        (Preset::Desk, None) => bail!("--modality is required with the desk preset"),
        (p, Some(_)) => bail!("preset {} fixes the modality", preset_name(p)),
    };
    let base = match a.preset {
        Preset::Desk => TrainConfig::desk(modality, a.seed),
        Preset::PaperImage => TrainConfig::paper_image(a.seed),
        Preset::PaperVideo => TrainConfig::paper_video(a.seed),
    };
    let mut cfg = with_overrides(base, a.config.as_deref())?;
    if let Some(steps) = a.steps {
        cfg.max_steps = steps;
    }
    cfg.validate()?;
    println!(
        "preset={} modality={modality} lr0={:e} steps={} batch={} keep={} seed={}",
        preset_name(a.preset),
        cfg.schedule.initial(),
        cfg.max_steps,
        cfg.batch_size,
        cfg.keep_prob,
        cfg.seed
    );
    let Some(data) = a.data.as_deref().filter(|_| !a.dry_run) else {
        return Ok(());
    };
    let out = a.out.as_deref().ok_or_else(|| anyhow!("--out is required when training"))?;
    let set = load_prepared(data)?;
    let mut prov = with_input(Provenance::new("train", Some(a.seed)), data)?;
    if let Some(c) = &a.config {
        prov = with_input(prov, c)?;
    }
    let (net, curve) = train_model(&set, modality, &cfg, derive_seed(a.seed, "init"))?;
    let mut meta = prov.to_json();
    meta["train_config"] = serde_json::to_value(&cfg)?;
    meta["preset"] = preset_name(a.preset).into();
    write_file(out, weights::encode(&net, &meta))?;
    if let Some(path) = &a.curve {
        let mut csv = format!("{}\nstep,lr,loss\n", prov.header_line());
        for r in &curve {
            let _ = writeln!(csv, "{},{:e},{:e}", r.step, r.lr, r.loss);
        }
        write_file(path, csv)?;
    }
    if let Some(last) = curve.last() {
        println!("final loss {:.4} after {} steps", last.loss, curve.len());
    }
    Ok(())
}

fn load_prepared(path: &Path) -> Result<PreparedSet> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    PreparedSet::decode(&bytes).with_context(|| format!("{}", path.display()))
}

pub fn predict_cmd(a: &PredictArgs) -> Result<()> {
    let set = load_prepared(&a.data)?;
    let mut prov = with_input(Provenance::new("predict", None), &a.data)?;
    let mut nets = Vec::new();
    for path in &a.models {
        let (net, _) = weights::load::<f32>(path).with_context(|| format!("{}", path.display()))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| anyhow!("{}: no file name", path.display()))?;
        if id == ENSEMBLE_ID || id == ga_core::pipeline::VIDEO_ENSEMBLE_ID {
            bail!("{}: model id `{id}` is reserved for ensembles", path.display());
        }
        if nets.iter().any(|(n, _)| *n == id) {
            bail!("two models share the id `{id}`");
        }
        prov = with_input(prov, path)?;
        nets.push((id, net));
    }
    let models: Vec<_> = nets.iter().map(|(id, n)| (id.clone(), n)).collect();
    let rows = predict_visits(&set, &models)?;
    write_file(&a.out, predictions_to_csv(&rows, Some(&prov.header_line())))?;
    println!("{} case estimates for {} visits", rows.len(), set.visits.len());
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let cohort = load_manifest(&a.manifest)?;
    let mut prov = with_input(Provenance::new("evaluate", Some(a.seed)), &a.manifest)?;
    let mut rows: Vec<PredictionRow> = Vec::new();
    for p in &a.preds {
        rows.extend(predictions_from_csv(&read_text(p)?, &p.display().to_string())?);
        prov = with_input(prov, p)?;
    }
    let library = match &a.formulae {
        Some(path) => {
            prov = with_input(prov, path)?;
            FormulaLibrary::load(path)?
        }
        None => FormulaLibrary::default(),
    };
    let mut baselines = vec![a.baseline.as_str()];
    baselines.extend(a.compare.iter().map(String::as_str));
    let estimates = merge_baselines(&cohort, &rows, &library, &baselines);

    let model_ids: BTreeSet<&str> = rows.iter().map(|r| r.estimate.model_id.as_str()).collect();
    let primary = match &a.primary {
        Some(p) => p.clone(),
        None if model_ids.contains(ENSEMBLE_ID) => ENSEMBLE_ID.to_string(),
        None if model_ids.len() == 1 => model_ids.iter().next().expect("one id").to_string(),
        None => bail!("several models and no ensemble in the predictions; choose one with --primary"),
    };
    let mut overall = vec![primary.clone()];
    overall.extend(model_ids.iter().filter(|m| **m != primary).map(|m| m.to_string()));
    let patients = match &a.split {
        Some(path) => {
            prov = with_input(prov, path)?;
            split_members(&load_split(path)?, Split::Test)
        }
        None => rows.iter().map(|r| r.patient_id.clone()).collect(),
    };
    let spec = ReportSpec {
        primary,
        overall_methods: overall,
        reference: a.baseline.clone(),
        formulae: a.compare.clone(),
        patients: Some(patients),
    };
    // small cohorts may not fill a single percentile cell
    let table = match build_percentile_table(&cohort, &GrowthConfig::default()) {
        Ok(t) => Some(t),
        Err(e) => {
            eprintln!("warning: size subgroups left empty: {e}");
            None
        }
    };
    let stats = StatsConfig {
        ci_method: match a.ci {
            CiArg::Normal => CiMethod::NormalZ,
            CiArg::T => CiMethod::StudentT,
        },
        seed: a.seed,
        ..StatsConfig::default()
    };
    let report = build_report(&cohort, &estimates, &spec, &SubgroupContext { growth: table.as_ref() }, &stats)?;
    let dir = StagedDir::new(&a.out)?;
    for (name, contents) in report.files(&prov.header_line()) {
        write_file(&dir.path().join(name), contents)?;
    }
    let out = dir.commit()?;
    if let Some(t1) = report.analysis("table1", "overall") {
        for m in &t1.methods {
            println!("{:<12} MAE {:.2} days", m.method, m.errors.mae);
        }
    }
    println!("report written to {}", out.display());
    Ok(())
}

pub fn percentiles(a: &PercentilesArgs) -> Result<()> {
    let cohort = load_manifest(&a.manifest)?;
    let table = build_percentile_table(&cohort, &GrowthConfig::default())?;
    let prov = with_input(Provenance::new("percentiles", None), &a.manifest)?;
    write_file(&a.out, table.to_csv(Some(&prov.header_line())))?;
    println!("{} population-week cells", table.cells.len());
    Ok(())
}

pub fn formula_eval(a: &FormulaEvalArgs) -> Result<()> {
    let library = FormulaLibrary::load(&a.config)?;
    let spec = library.get(&a.name).ok_or_else(|| {
        anyhow!(
            "no formula `{}` in {}; available: {}",
            a.name,
            a.config.display(),
            library.names().collect::<Vec<_>>().join(", ")
        )
    })?;
    let mut values: BTreeMap<&str, f64> = BTreeMap::new();
    for (k, v) in &a.values {
        let Some(name) = BiometryMeasurements::VARIABLES.iter().find(|n| **n == k.as_str()) else {
            bail!("unknown measurement `{k}`; expected one of {}", BiometryMeasurements::VARIABLES.join(", "));
        };
        values.insert(name, *v);
    }
    let m = BiometryMeasurements {
        bpd: values.get("bpd").copied(),
        hc: values.get("hc").copied(),
        ac: values.get("ac").copied(),
        fl: values.get("fl").copied(),
        crl: values.get("crl").copied(),
    };
    let r = eval_formula(spec, &m)?;
    let note = if r.out_of_range { " (outside the formula's GA range)" } else { "" };
    println!("{}: {:.3} days = {:.3} weeks{note}", spec.name, r.ga_days, r.ga_days / 7.0);
    Ok(())
}
