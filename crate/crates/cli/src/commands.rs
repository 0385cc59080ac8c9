// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use saelang::lape::{
    find_language_specific, find_language_specific_neurons, shared_feature_analysis,
};
use saelang::lid::{build_lid_model, evaluate, predict, LidScorer, ScoreOptions};
use saelang::props::{
    activating_iou, activation_pearson, activation_pearson_on_union, bias_cosines, opposing_pairs,
    ActivityIndex,
};
use saelang::report::{
    confusion_csv, csv_field, lape_histogram_csv, layer_histogram_csv, matrix_csv,
    shared_layer_histogram_csv,
};
use saelang::steering::{build_plan, steer_shard, NeuronDirections, SaeDirections};
use saelang::store::{read_ffn_down, read_sae_weights, read_shard, read_unembedding, write_shard};
use saelang::synth::generate;
use saelang::{
    ActivationShard, CorpusManifest, Error, LapeReport, LidModel, NeuronParams, NeuronReport,
    PlantSpec, Result, SaeWeights, ShardEncoding, SteeringPlan, UnitKind,
};

use crate::args::*;
use crate::io::{
    build_tables, latent_shards, load_saes, parse_unit, read_json, write_bytes, write_json, Corpus,
    ProfileSet, TablesDoc,
};

fn config(command: &str, args: &impl Serialize) -> Result<Value> {
    Ok(json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": serde_json::to_value(args)?,
    }))
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Encode(a) => encode(&a),
        Command::Lape(LapeCommand::Find(a)) => lape_find(&a),
        Command::Lape(LapeCommand::Shared(a)) => lape_shared(&a),
        Command::Lape(LapeCommand::Neurons(a)) => lape_neurons(&a),
        Command::Props(PropsCommand::Pairs(a)) => props_pairs(&a),
        Command::Props(PropsCommand::Iou(a)) => props_iou(&a),
        Command::Props(PropsCommand::Pearson(a)) => props_pearson(&a),
        Command::Steer(SteerCommand::Plan(a)) => steer_plan(&a),
        Command::Steer(SteerCommand::Apply(a)) => steer_apply(&a),
        Command::Lid(LidCommand::Build(a)) => lid_build(&a),
        Command::Lid(LidCommand::Score(a)) => lid_score(&a),
        Command::Lid(LidCommand::Eval(a)) => lid_eval(&a),
        Command::Lens(LensCommand::TopTokens(a)) => lens_top_tokens(&a),
        Command::Synth(SynthCommand::Generate(a)) => synth_generate(&a),
        Command::Report(ReportCommand::Layers(a)) => report_layers(&a),
        Command::Report(ReportCommand::LapeHist(a)) => report_lape_hist(&a),
    }
}

fn encode(a: &EncodeArgs) -> Result<()> {
    let cfg = config("encode", a)?;
    let corpus = Corpus::load(&a.corpus.manifest)?;
    let saes = load_saes(&a.corpus.saes)?;
    if let Some(s) = corpus
        .shards
        .iter()
        .find(|s| s.encoding == ShardEncoding::Dense && !saes.contains_key(&s.layer))
    {
        return Err(Error::InvalidParam(format!(
            "no SAE given for layer {}",
            s.layer
        )));
    }
    let encoded = latent_shards(corpus.shards, &saes)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::from(e).at(&a.out))?;

    let mut manifest = CorpusManifest::new(corpus.manifest.languages.clone());
    manifest.examples_per_language = corpus.manifest.examples_per_language.clone();
    let mut seen: BTreeMap<u16, usize> = BTreeMap::new();
    for s in &encoded {
        let code = &manifest.languages[s.language_id as usize];
        let list = manifest.shards.entry(code.clone()).or_default();
        let name = PathBuf::from(format!("{code}.l{}.{}.act", s.layer, list.len()));
        write_shard(s, a.out.join(&name))?;
        list.push(name);
        manifest.dims.insert(s.layer, s.dim);
        *seen.entry(s.layer).or_default() += 1;
    }
    let path = a.out.join("manifest.json");
    write_bytes(Some(&path), (manifest.to_json()? + "\n").as_bytes())?;
    let summary = json!({ "manifest": path, "shards_per_layer": seen });
    write_json(None, &cfg, &summary)
}

#[derive(Serialize)]
struct FindDoc<'a> {
    languages: &'a [String],
    unit_kind: UnitKind,
    #[serde(flatten)]
    report: &'a LapeReport,
}

#[derive(Serialize)]
struct NeuronDoc<'a> {
    languages: &'a [String],
    unit_kind: UnitKind,
    #[serde(flatten)]
    report: &'a NeuronReport,
}

fn tables_for(
    manifest: Option<&PathBuf>,
    tables: Option<&PathBuf>,
    saes: &[PathBuf],
    kind: UnitKind,
) -> Result<TablesDoc> {
    match (manifest, tables) {
        (Some(m), _) => {
            let corpus = Corpus::load(m)?;
            let languages = corpus.languages().to_vec();
            let saes = load_saes(saes)?;
            Ok(TablesDoc {
                languages,
                tables: build_tables(corpus, &saes, kind)?,
            })
        }
        (None, Some(t)) => {
            let doc: TablesDoc = read_json(t)?;
            if let Some(t) = doc.tables.iter().find(|t| t.unit_kind != kind) {
                return Err(Error::KindMismatch(format!(
                    "table for layer {} has the wrong unit kind",
                    t.layer
                )));
            }
            Ok(doc)
        }
        (None, None) => Err(Error::InvalidParam("need --manifest or --tables".into())),
    }
}

fn lape_find(a: &LapeFindArgs) -> Result<()> {
    let cfg = config("lape find", a)?;
    let params = a.filters.params();
    params.validate()?;
    let doc = tables_for(
        a.manifest.as_ref(),
        a.tables.as_ref(),
        &a.saes,
        UnitKind::SaeFeature,
    )?;
    if let Some(p) = &a.tables_out {
        write_json(Some(p), &cfg, &doc)?;
    }
    let report = find_language_specific(&doc.tables, &params)?;
    let out = FindDoc {
        languages: &doc.languages,
        unit_kind: UnitKind::SaeFeature,
        report: &report,
    };
    write_json(a.out.as_deref(), &cfg, &out)
}

fn lape_shared(a: &LapeSharedArgs) -> Result<()> {
    let cfg = config("lape shared", a)?;
    let set = ProfileSet::load(&a.profiles)?;
    let analysis = shared_feature_analysis(&set.all(), set.languages.len());
    if let Some(p) = &a.jaccard_csv {
        write_bytes(
            Some(p),
            matrix_csv(&set.languages, &analysis.jaccard)?.as_bytes(),
        )?;
    }
    write_json(
        a.out.as_deref(),
        &cfg,
        &json!({ "languages": set.languages, "analysis": analysis }),
    )
}

fn lape_neurons(a: &LapeNeuronsArgs) -> Result<()> {
    let cfg = config("lape neurons", a)?;
    let doc = tables_for(
        a.manifest.as_ref(),
        a.tables.as_ref(),
        &[],
        UnitKind::FfnNeuron,
    )?;
    if let Some(p) = &a.tables_out {
        write_json(Some(p), &cfg, &doc)?;
    }
    let params = NeuronParams {
        percentile: a.percentile,
        bottom_frac: a.bottom_frac,
    };
    let report = find_language_specific_neurons(&doc.tables, &params)?;
    let out = NeuronDoc {
        languages: &doc.languages,
        unit_kind: UnitKind::FfnNeuron,
        report: &report,
    };
    write_json(a.out.as_deref(), &cfg, &out)
}

/// Latent shards of the corpus, restricted to `layers`.
fn corpus_latents(
    corpus: &CorpusArgs,
    layers: &BTreeSet<u16>,
) -> Result<(Corpus, BTreeMap<u16, SaeWeights>)> {
    let mut c = Corpus::load(&corpus.manifest)?;
    let saes = load_saes(&corpus.saes)?;
    let shards: Vec<ActivationShard> = std::mem::take(&mut c.shards)
        .into_iter()
        .filter(|s| layers.contains(&s.layer))
        .collect();
    c.shards = latent_shards(shards, &saes)?;
    Ok((c, saes))
}

fn props_pairs(a: &PropsPairsArgs) -> Result<()> {
    let cfg = config("props pairs", a)?;
    let (corpus, saes) = corpus_latents(&a.corpus, &BTreeSet::from([a.layer]))?;
    let w = saes
        .get(&a.layer)
        .ok_or_else(|| Error::InvalidParam(format!("no SAE given for layer {}", a.layer)))?;
    let targets: Vec<usize> = match &a.profiles {
        Some(p) => ProfileSet::load(p)?
            .primary()
            .iter()
            .filter(|p| p.layer == a.layer)
            .map(|p| p.unit as usize)
            .collect(),
        None => a.targets.clone(),
    };
    let activity = ActivityIndex::from_shards(w.n(), &corpus.shards)?;
    let mut pairs = opposing_pairs(w, &targets, &activity)?;
    for p in &mut pairs {
        p.layer = a.layer;
    }
    // a zero decoder bias has no direction to compare against
    let bias: Vec<Value> = if w.b_dec().iter().all(|&b| b == 0.0) {
        targets
            .iter()
            .map(|&f| json!({ "feature": f, "cosine": null }))
            .collect()
    } else {
        bias_cosines(w, &targets)?
            .into_iter()
            .map(|(f, c)| json!({ "feature": f, "cosine": c }))
            .collect()
    };
    write_json(
        a.out.as_deref(),
        &cfg,
        &json!({ "layer": a.layer, "pairs": pairs, "bias_cosines": bias }),
    )
}

fn parse_features(features: &[String]) -> Result<Vec<(u16, u32)>> {
    features.iter().map(|f| parse_unit(f)).collect()
}

fn check_units(units: &[(u16, u32)], shards: &[ActivationShard]) -> Result<()> {
    for &(l, j) in units {
        let dim = shards
            .iter()
            .find(|s| s.layer == l)
            .map(|s| s.dim)
            .ok_or_else(|| Error::InvalidParam(format!("corpus has no shards for layer {l}")))?;
        if j >= dim {
            return Err(Error::IndexOutOfRange {
                index: j as u64,
                bound: dim as u64,
            });
        }
    }
    Ok(())
}

fn props_iou(a: &PropsMatrixArgs) -> Result<()> {
    let units = parse_features(&a.features)?;
    let layers = units.iter().map(|&(l, _)| l).collect();
    let (corpus, _) = corpus_latents(&a.corpus, &layers)?;
    check_units(&units, &corpus.shards)?;
    let sets: Vec<BTreeSet<u32>> = units
        .par_iter()
        .map(|&(l, j)| {
            corpus
                .shards
                .iter()
                .filter(|s| s.layer == l)
                .flat_map(|s| &s.records)
                .filter(|r| r.values.get(j as usize) > 0.0)
                .map(|r| r.token_id)
                .collect()
        })
        .collect();
    let m: Vec<Vec<f64>> = sets
        .iter()
        .map(|x| sets.iter().map(|y| activating_iou(x, y)).collect())
        .collect();
    write_bytes(a.out.as_deref(), matrix_csv(&a.features, &m)?.as_bytes())
}

fn props_pearson(a: &PropsPearsonArgs) -> Result<()> {
    let units = parse_features(&a.matrix.features)?;
    let layers: BTreeSet<u16> = units.iter().map(|&(l, _)| l).collect();
    if layers.len() != 1 {
        return Err(Error::InvalidParam(
            "Pearson features must share one layer".into(),
        ));
    }
    let (corpus, _) = corpus_latents(&a.matrix.corpus, &layers)?;
    check_units(&units, &corpus.shards)?;
    let series: Vec<Vec<f32>> = units
        .par_iter()
        .map(|&(_, j)| {
            corpus
                .shards
                .iter()
                .flat_map(|s| &s.records)
                .map(|r| r.values.get(j as usize))
                .collect()
        })
        .collect();
    let corr = |x: &[f32], y: &[f32]| {
        let r = if a.union {
            activation_pearson_on_union(x, y)
        } else {
            activation_pearson(x, y)
        };
        match r {
            Err(Error::ConstantSeries) => Ok(f64::NAN),
            other => other,
        }
    };
    let m = series
        .iter()
        .map(|x| {
            series
                .iter()
                .map(|y| corr(x, y))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    write_bytes(
        a.matrix.out.as_deref(),
        matrix_csv(&a.matrix.features, &m)?.as_bytes(),
    )
}

fn steer_plan(a: &SteerPlanArgs) -> Result<()> {
    let cfg = config("steer plan", a)?;
    let set = ProfileSet::load(&a.profiles)?;
    let lang = set.language_index(&a.language)?;
    let candidates = if a.include_shared {
        set.all()
    } else {
        set.primary()
    };
    let plan = build_plan(&candidates, lang, a.alpha, set.unit_kind)?;
    write_json(a.out.as_deref(), &cfg, &plan)
}

fn steer_apply(a: &SteerApplyArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.plan).map_err(|e| Error::from(e).at(&a.plan))?;
    let mut plan = SteeringPlan::from_json(&text).map_err(|e| e.at(&a.plan))?;
    if let Some(alpha) = a.alpha {
        plan = plan.with_alpha(alpha);
        plan.validate()?;
    }
    let shard = read_shard(&a.input)?;
    let out = match plan.unit_kind {
        UnitKind::SaeFeature => {
            let saes = a
                .saes
                .iter()
                .map(read_sae_weights)
                .collect::<Result<Vec<_>>>()?;
            steer_shard(&shard, &plan, &SaeDirections::new(&saes))?
        }
        UnitKind::FfnNeuron => {
            let mats = a
                .ffn_downs
                .iter()
                .map(read_ffn_down)
                .collect::<Result<Vec<_>>>()?;
            steer_shard(&shard, &plan, &NeuronDirections::new(&mats))?
        }
    };
    write_shard(&out, &a.out)
}

fn lid_build(a: &LidBuildArgs) -> Result<()> {
    let cfg = config("lid build", a)?;
    let set = ProfileSet::load(&a.profiles)?;
    let doc = tables_for(
        a.manifest.as_ref(),
        a.tables.as_ref(),
        &a.saes,
        set.unit_kind,
    )?;
    if doc.languages != set.languages {
        return Err(Error::InvalidParam(
            "profiles and tables list different languages".into(),
        ));
    }
    let model = build_lid_model(
        &set.primary(),
        &doc.tables,
        &set.languages,
        set.unit_kind,
        a.epsilon,
    )?;
    write_json(a.out.as_deref(), &cfg, &model)
}

struct Scored {
    model: LidModel,
    /// example id -> scores
    scores: BTreeMap<u32, Vec<f64>>,
    /// example id -> language index of its shard
    origin: BTreeMap<u32, usize>,
}

fn score_corpus(a: &ScoringArgs) -> Result<Scored> {
    let text = std::fs::read_to_string(&a.model).map_err(|e| Error::from(e).at(&a.model))?;
    let model = LidModel::from_json(&text).map_err(|e| e.at(&a.model))?;
    let layers: BTreeSet<u16> = model.layers.iter().map(|l| l.layer).collect();
    let (corpus, _) = corpus_latents(&a.corpus, &layers)?;
    if corpus.languages() != model.languages.as_slice() {
        return Err(Error::InvalidParam(
            "model and corpus list different languages".into(),
        ));
    }
    if model.unit_kind == UnitKind::SaeFeature {
        if let Some(s) = corpus
            .shards
            .iter()
            .find(|s| s.encoding == ShardEncoding::Dense)
        {
            return Err(Error::InvalidParam(format!(
                "layer {} is dense; pass its SAE with --sae",
                s.layer
            )));
        }
    }
    let mut origin = BTreeMap::new();
    for s in &corpus.shards {
        for r in &s.records {
            let prev = origin.insert(r.example_id, s.language_id as usize);
            if prev.is_some_and(|p| p != s.language_id as usize) {
                return Err(Error::InvalidParam(format!(
                    "example {} appears under two languages",
                    r.example_id
                )));
            }
        }
    }
    let options = ScoreOptions {
        weighted: a.weighted,
        normalize: a.normalize,
    };
    let scores = LidScorer::new(&model, options).score_examples(&corpus.shards)?;
    Ok(Scored {
        model,
        scores,
        origin,
    })
}

fn lid_score(a: &LidScoreArgs) -> Result<()> {
    let cfg = config("lid score", a)?;
    let s = score_corpus(&a.scoring)?;
    let rows: Vec<Value> = s
        .scores
        .iter()
        .map(|(id, sc)| {
            let pred = predict(sc).map(|k| s.model.languages[k].clone());
            json!({ "example_id": id, "scores": sc, "prediction": pred })
        })
        .collect();
    write_json(
        a.out.as_deref(),
        &cfg,
        &json!({ "languages": s.model.languages, "examples": rows }),
    )
}

fn lid_eval(a: &LidEvalArgs) -> Result<()> {
    let cfg = config("lid eval", a)?;
    let s = score_corpus(&a.scoring)?;
    let n_langs = s.model.n_langs();
    let gold: BTreeMap<u32, usize> = match &a.gold {
        Some(p) => {
            let raw: BTreeMap<u32, String> = read_json(p)?;
            raw.into_iter()
                .map(|(id, code)| {
                    let k = s
                        .model
                        .languages
                        .iter()
                        .position(|l| *l == code)
                        .ok_or_else(|| {
                            Error::InvalidParam(format!(
                                "gold label {code:?} is not a model language"
                            ))
                        })?;
                    Ok((id, k))
                })
                .collect::<Result<_>>()?
        }
        None => s.origin.clone(),
    };
    let mut preds = Vec::with_capacity(s.scores.len());
    let mut golds = Vec::with_capacity(s.scores.len());
    for (id, sc) in &s.scores {
        let g = *gold
            .get(id)
            .ok_or_else(|| Error::InvalidParam(format!("no gold label for example {id}")))?;
        preds.push(predict(sc).ok_or(Error::EmptyTable)?);
        golds.push(g);
    }
    let report = evaluate(&preds, &golds, n_langs)?;
    if let Some(p) = &a.confusion_csv {
        write_bytes(
            Some(p),
            confusion_csv(&report, &s.model.languages)?.as_bytes(),
        )?;
    }
    write_json(
        a.out.as_deref(),
        &cfg,
        &json!({ "languages": s.model.languages, "report": report }),
    )
}

fn lens_top_tokens(a: &LensArgs) -> Result<()> {
    let (layer, index) = parse_unit(&a.feature)?;
    let u = read_unembedding(&a.unembedding)?;
    let direction = match (&a.sae, &a.ffn_down) {
        (Some(p), _) => {
            let w = read_sae_weights(p)?;
            if w.layer() != layer {
                return Err(Error::LayerMismatch {
                    expected: layer as u32,
                    found: w.layer() as u32,
                });
            }
            saelang::sae::feature_direction(&w, index as usize)?
        }
        (None, Some(p)) => {
            let f = read_ffn_down(p)?;
            if f.layer() != layer {
                return Err(Error::LayerMismatch {
                    expected: layer as u32,
                    found: f.layer() as u32,
                });
            }
            f.column(index as usize)?
        }
        (None, None) => return Err(Error::InvalidParam("need --sae or --ffn-down".into())),
    };
    let top = saelang::lens::top_tokens(&direction, &u, a.top)?;
    let mut csv = String::from("rank,token,probability\n");
    for (i, t) in top.iter().enumerate() {
        writeln!(csv, "{},{},{}", i + 1, csv_field(&t.token), t.probability).unwrap();
    }
    write_bytes(a.out.as_deref(), csv.as_bytes())
}

fn synth_generate(a: &SynthArgs) -> Result<()> {
    let cfg = config("synth generate", a)?;
    let mut spec: PlantSpec = read_json(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let corpus = generate(&spec)?;
    let manifest = corpus.write_to(&a.out)?;
    let records: usize = corpus.shards.iter().map(|s| s.records.len()).sum();
    let summary = json!({
        "manifest": manifest,
        "seed": spec.seed,
        "records": records,
        "planted": corpus.ground_truth.pairs.len(),
    });
    write_json(None, &cfg, &summary)
}

fn report_layers(a: &ReportLayersArgs) -> Result<()> {
    let set = ProfileSet::load(&a.profiles)?;
    let csv = if a.shared {
        shared_layer_histogram_csv(&set.shared())
    } else {
        layer_histogram_csv(&set.primary(), &set.languages)?
    };
    write_bytes(a.out.as_deref(), csv.as_bytes())
}

fn report_lape_hist(a: &ReportHistArgs) -> Result<()> {
    let set = ProfileSet::load(&a.profiles)?;
    let csv = lape_histogram_csv(&set.all(), set.languages.len(), a.bins)?;
    write_bytes(a.out.as_deref(), csv.as_bytes())
}
