use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::{
    AnalyzeCommand, Cli, Command, EvalArgs, HeatmapArgs, IndexArgs, KindChoice, LossCheckArgs, MergeArgs, MineArgs,
    PcaArgs, ProviderArgs, StorageArgs, Strategy,
};
use crate::analysis::{self, StorageEntry};
use crate::error::{Error, Result};
use crate::eval::{self, IndexMode, MetricReport, RetrievalRun};
use crate::index::{self, HnswParams, IndexKind, IndexMeta, StoredIndex};
use crate::losses::gradcheck::run_loss_check;
use crate::merge::{self, MergeConfig};
use crate::mining::{self, io::NegativesRow, MiningConfig, PageTable, TextSidecar};
use crate::providers::{self, EmbedInput, EmbeddingPayload, EmbeddingProvider, ProviderKind, SyntheticProvider};
use crate::vector::{DocId, MultiVectorEmbedding, QueryId};

/// Runs one parsed command.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        // Ignore the error when a pool already exists (repeated calls in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t as usize).build_global();
    }
    let ctx = Ctx {
        seed: cli.seed,
        threads: cli.threads.map(|t| t as usize),
        out: cli.output_dir,
    };
    match cli.command {
        Command::Index(a) => cmd_index(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Mine(a) => cmd_mine(&ctx, a),
        Command::Merge(a) => cmd_merge(&ctx, a),
        Command::Analyze(AnalyzeCommand::Pca(a)) => cmd_pca(&ctx, a),
        Command::Analyze(AnalyzeCommand::Heatmap(a)) => cmd_heatmap(&ctx, a),
        Command::Analyze(AnalyzeCommand::Storage(a)) => cmd_storage(&ctx, a),
        Command::LossCheck(a) => cmd_loss_check(&ctx, a),
        Command::Serve(a) => super::serve::serve(ctx.seed, ctx.threads, a),
    }
}

struct Ctx {
    seed: u64,
    threads: Option<usize>,
    out: PathBuf,
}

impl Ctx {
    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(&self.out)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Provider from the flags, falling back to the one recorded with the index.
pub(super) fn resolve_provider(
    flags: &ProviderArgs,
    seed: u64,
    meta: Option<&IndexMeta>,
) -> Result<Box<dyn EmbeddingProvider>> {
    match flags.kind(seed)? {
        Some(k) => k.build(),
        None => match meta.and_then(|m| m.provider.as_ref()) {
            Some(k) => k.build(),
            None => Err(Error::InvalidConfig(
                "no provider recorded with the index; pass --provider".into(),
            )),
        },
    }
}

fn cmd_index(ctx: &Ctx, a: IndexArgs) -> Result<()> {
    let kind_flag = a.provider.kind(ctx.seed)?;
    let kind = match (&kind_flag, &a.provider.embeddings) {
        (Some(k), _) => k.clone(),
        (None, Some(p)) => ProviderKind::PrecomputedFile {
            path: fs::canonicalize(p).map_err(|e| Error::io(p, e))?,
        },
        (None, None) => ProviderKind::Synthetic {
            seed: ctx.seed,
            dim: a.provider.dim,
        },
    };
    let ann = a.ann.then_some(HnswParams {
        m: a.hnsw_m,
        ef_construction: a.ef_construction,
        ef_search: a.ef_search,
        seed: ctx.seed,
    });
    if let Some(p) = &ann {
        p.validate()?;
    }
    if a.max_tokens == 0 {
        return Err(Error::InvalidConfig("--max-tokens must be >= 1".into()));
    }
    let ikind = match a.kind {
        KindChoice::Dense => IndexKind::Dense,
        KindChoice::Multivector => IndexKind::Multivector,
    };
    let index = match &a.corpus {
        Some(dir) => {
            let ds = eval::load_beir(dir)?;
            let provider = kind.build()?;
            eval::build_corpus_index(&ds, provider.as_ref(), ikind, ann, a.max_tokens)?
        }
        None => match &kind {
            ProviderKind::PrecomputedFile { path } => index_from_file(path, ikind, ann, a.max_tokens)?,
            _ => {
                return Err(Error::InvalidConfig(
                    "pass --corpus, or --embeddings to index a file".into(),
                ))
            }
        },
    };
    let dir = match a.out {
        Some(d) => d,
        None => ctx.out_dir()?.join("index"),
    };
    let max_tokens = (ikind == IndexKind::Multivector).then_some(a.max_tokens);
    let meta = index::save_index(&dir, &index, Some(&kind), max_tokens)?;
    tracing::info!(docs = meta.count, dim = meta.dim, dir = %dir.display(), "index written");
    println!(
        "indexed {} documents (dim {}) into {}",
        meta.count,
        meta.dim,
        dir.display()
    );
    Ok(())
}

fn index_from_file(path: &Path, kind: IndexKind, ann: Option<HnswParams>, max_tokens: usize) -> Result<StoredIndex> {
    let recs = providers::load_precomputed(path)?;
    let mut dense = Vec::new();
    let mut multi = Vec::new();
    for (id, r) in recs {
        let id = DocId::new(id)?;
        match r.payload {
            EmbeddingPayload::Dense(d) => dense.push((id, d)),
            EmbeddingPayload::MultiVector(m) => {
                let rows: Vec<Vec<f32>> = m.rows().take(max_tokens).map(<[f32]>::to_vec).collect();
                multi.push((id, MultiVectorEmbedding::from_rows(rows)?));
            }
        }
    }
    match kind {
        IndexKind::Dense if multi.is_empty() => Ok(StoredIndex::Dense(index::build_dense_index(dense, ann)?)),
        IndexKind::Multivector if dense.is_empty() => {
            Ok(StoredIndex::MultiVector(index::build_multivector_index(multi)?))
        }
        _ => Err(Error::InvalidData(format!(
            "{} does not hold {kind:?} records",
            path.display()
        ))),
    }
}

fn default_mode(meta: &IndexMeta) -> IndexMode {
    match meta.kind {
        IndexKind::Dense => IndexMode::DenseExact,
        IndexKind::Multivector => IndexMode::MultiVector,
    }
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let metrics = eval::parse_metrics(&a.metrics)?;
    let ds = eval::load_beir(&a.dataset)?;
    let out = ctx.out_dir()?;
    let run = match (&a.run, &a.index) {
        (Some(path), _) => RetrievalRun {
            lists: mining::io::read_rankings(path)?,
        },
        (None, Some(dir)) => {
            let (meta, mut index) = index::load_index(dir)?;
            if let (Some(ef), StoredIndex::Dense(ix)) = (a.ef_search, &mut index) {
                ix.set_ef_search(ef);
            }
            let mode = match &a.mode {
                Some(m) => m.parse()?,
                None => default_mode(&meta),
            };
            let provider = resolve_provider(&a.provider, ctx.seed, Some(&meta))?;
            let max_tokens = meta.max_tokens.unwrap_or(32);
            let run = eval::run_retrieval(&ds, provider.as_ref(), &index, mode, a.depth, max_tokens)?;
            mining::io::write_rankings(&out.join("run.tsv"), &run.lists)?;
            run
        }
        (None, None) => return Err(Error::InvalidConfig("eval needs --index or --run".into())),
    };
    let report = eval::evaluate(&run, &ds.qrels, &metrics);
    write_text(&out.join("report.txt"), &report.to_text())?;
    analysis::write_json(&out.join("report.json"), &report)?;
    for v in &report.metrics {
        println!("{}\t{:.6}", v.metric, v.mean);
    }
    if let Some(b) = &a.baseline {
        let raw = fs::read(b).map_err(|e| Error::io(b, e))?;
        let base: MetricReport =
            serde_json::from_slice(&raw).map_err(|e| Error::parse(b.display().to_string(), e.line(), e.to_string()))?;
        let cmp = eval::compare_runs(&report, &base)?;
        write_text(&out.join("comparison.txt"), &cmp.to_text())?;
        print!("{}", cmp.to_text());
    }
    Ok(())
}

fn parse_window(s: &str) -> Result<Vec<i64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad page offset `{t}`")))
        })
        .collect()
}

fn cmd_mine(ctx: &Ctx, a: MineArgs) -> Result<()> {
    let cfg = MiningConfig {
        k: a.k,
        pool_size: a.pool,
        rrf_k: a.rrf_k,
        page_window: parse_window(&a.page_window)?,
        seed: ctx.seed,
    };
    cfg.validate()?;
    let ds = eval::load_beir(&a.dataset)?;
    let pairs: Vec<(&QueryId, Vec<&DocId>)> = ds
        .queries
        .keys()
        .map(|q| (q, ds.qrels.positives(q)))
        .filter(|(_, p)| !p.is_empty())
        .collect();
    let mut rows = Vec::new();
    match a.strategy {
        Strategy::Page => {
            let path = a
                .pages
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("--strategy page needs --pages".into()))?;
            let pages = mining::io::read_pages(path)?;
            let by_doc: BTreeMap<&DocId, &mining::PageRef> = pages.iter().map(|p| (&p.doc, p)).collect();
            let table = PageTable::new(&pages)?;
            for (q, positives) in &pairs {
                for p in positives {
                    let page = by_doc
                        .get(p)
                        .ok_or_else(|| Error::InvalidData(format!("positive {p} missing from page table")))?;
                    rows.push(NegativesRow {
                        query: (*q).clone(),
                        positive: (*p).clone(),
                        negatives: table.neighbours(page, &cfg)?,
                    });
                }
            }
        }
        Strategy::Corpus => {
            let external: Vec<mining::io::Rankings> = a
                .rankings
                .iter()
                .map(|p| mining::io::read_rankings(p))
                .collect::<Result<_>>()?;
            let bm25 = if a.no_bm25 {
                None
            } else {
                let sidecars = match &a.sidecar {
                    Some(p) => mining::io::read_sidecars(p)?,
                    None => ds
                        .corpus
                        .iter()
                        .map(|(id, d)| TextSidecar {
                            doc: id.clone(),
                            text: d.embed_text(),
                        })
                        .collect(),
                };
                Some(mining::Bm25Index::new(&sidecars)?)
            };
            let dense = match &a.index {
                Some(dir) => {
                    let (meta, index) = index::load_index(dir)?;
                    let StoredIndex::Dense(ix) = index else {
                        return Err(Error::InvalidConfig("embedding ranker needs a dense index".into()));
                    };
                    Some((resolve_provider(&a.provider, ctx.seed, Some(&meta))?, ix))
                }
                None => None,
            };
            if bm25.is_none() && dense.is_none() && external.is_empty() {
                return Err(Error::InvalidConfig(
                    "no rankers: drop --no-bm25 or add --index/--ranking".into(),
                ));
            }
            for (q, positives) in &pairs {
                let text = &ds.queries[*q];
                let mut lists = Vec::new();
                if let Some(b) = &bm25 {
                    match b.rank(text, a.depth) {
                        Ok(l) => lists.push(l),
                        Err(Error::EmptyQuery) => tracing::warn!(query = %q, "no BM25 terms; ranker skipped"),
                        Err(e) => return Err(e),
                    }
                }
                if let Some((provider, ix)) = &dense {
                    let e = provider.embed_dense(&EmbedInput { key: q.as_str(), text })?;
                    lists.push(mining::embedding_rank(&e, ix, a.depth)?);
                }
                for r in &external {
                    if let Some(l) = r.get(*q) {
                        lists.push(l.clone());
                    }
                }
                let fused = mining::rrf_fuse(&lists, cfg.rrf_k);
                let exclude: HashSet<&DocId> = positives.iter().copied().collect();
                let negatives = mining::mine_negatives_excluding(q, &exclude, &fused, &cfg)?;
                for p in positives {
                    rows.push(NegativesRow {
                        query: (*q).clone(),
                        positive: (*p).clone(),
                        negatives: negatives.clone(),
                    });
                }
            }
        }
    }
    let path = match a.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("negatives.tsv"),
    };
    mining::io::write_negatives(&path, &rows)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn cmd_merge(ctx: &Ctx, a: MergeArgs) -> Result<()> {
    let cfg = MergeConfig {
        method: a.method.parse()?,
        alpha: a.alpha,
        parallel_threshold: a.parallel_threshold,
        magnitude: a.magnitude.parse()?,
    };
    let ca = merge::load_checkpoint(&a.a)?;
    let cb = merge::load_checkpoint(&a.b)?;
    let merged = merge::merge(&ca, &cb, &cfg)?;
    let path = match a.out {
        Some(p) => p,
        None => ctx.out_dir()?.join("merged.ckpt"),
    };
    merge::save_checkpoint(&path, &merged)?;
    println!("merged {} tensors into {}", merged.tensors.len(), path.display());
    Ok(())
}

fn cmd_pca(ctx: &Ctx, a: PcaArgs) -> Result<()> {
    let labels = analysis::read_labels(&a.labels)?;
    let series = analysis::pca_series(&a.embeddings, &labels, ctx.seed)?;
    let files = analysis::write_pca_outputs(ctx.out_dir()?, &series)?;
    for (name, p) in &series {
        println!(
            "{name}\t{:.6}\t{:.6}",
            p.explained_variance_ratio[0], p.explained_variance_ratio[1]
        );
    }
    tracing::info!(files = files.len(), "pca outputs written");
    Ok(())
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidConfig(format!("bad grid `{s}` (expected ROWSxCOLS)"));
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((
        r.trim().parse().map_err(|_| bad())?,
        c.trim().parse().map_err(|_| bad())?,
    ))
}

fn cmd_heatmap(ctx: &Ctx, a: HeatmapArgs) -> Result<()> {
    let (q, d) = match (&a.embeddings, &a.query_text, &a.doc_text) {
        (Some(path), _, _) => {
            let (qid, did) = a
                .query
                .as_ref()
                .zip(a.doc.as_ref())
                .ok_or_else(|| Error::InvalidConfig("--embeddings needs --query and --doc ids".into()))?;
            let p = providers::PrecomputedProvider::open(path)?;
            (
                p.embed_multivector(&EmbedInput::text(qid), usize::MAX)?,
                p.embed_multivector(&EmbedInput::text(did), usize::MAX)?,
            )
        }
        (None, Some(qt), Some(dt)) => {
            let p = SyntheticProvider::new(ctx.seed, a.dim)?;
            (
                p.embed_text_multivector(qt, a.max_tokens)?,
                p.embed_text_multivector(dt, a.max_tokens)?,
            )
        }
        _ => {
            return Err(Error::InvalidConfig(
                "pass --embeddings with --query/--doc, or --query-text with --doc-text".into(),
            ))
        }
    };
    let (rows, cols) = match &a.grid {
        Some(g) => parse_grid(g)?,
        None => analysis::infer_grid(d.n_tokens()),
    };
    let grids = analysis::maxsim_heatmap(&q, &d, rows, cols)?;
    analysis::write_heatmap_outputs(ctx.out_dir()?, &grids)?;
    println!("maxsim\t{:.6}", grids.iter().map(|g| g.token_max).sum::<f64>());
    Ok(())
}

fn cmd_storage(ctx: &Ctx, a: StorageArgs) -> Result<()> {
    let mut entries = Vec::new();
    for dir in &a.indexes {
        let (_, ix) = index::load_index(dir)?;
        entries.push(StorageEntry::from_index(dir.display().to_string(), &ix));
    }
    if let Some(dims) = &a.dense_dims {
        for t in dims.split(',').filter(|t| !t.trim().is_empty()) {
            let d: usize = t
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad dimension `{t}`")))?;
            entries.push(StorageEntry::dense(d, a.docs));
        }
    }
    if let Some(shapes) = &a.multivector {
        for t in shapes.split(',').filter(|t| !t.trim().is_empty()) {
            let (n, d) = parse_grid(t)?;
            entries.push(StorageEntry::multivector(n, d, a.docs));
        }
    }
    if entries.is_empty() {
        return Err(Error::InvalidConfig(
            "nothing to report: pass --index, --dense-dims or --multivector".into(),
        ));
    }
    let report = analysis::storage_report(entries);
    analysis::write_json(&ctx.out_dir()?.join("storage.json"), &report)?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_loss_check(ctx: &Ctx, a: LossCheckArgs) -> Result<()> {
    if a.trials == 0 {
        return Err(Error::InvalidConfig("--trials must be >= 1".into()));
    }
    let report = run_loss_check(a.trials, ctx.seed, a.tau)?;
    for r in &report.per_loss {
        println!("{}\t{:.3e}", r.loss, r.max_rel_error);
    }
    println!("max_rel_error\t{:.3e}", report.max_rel_error);
    analysis::write_json(&ctx.out_dir()?.join("loss_check.json"), &report)?;
    if !report.passed() {
        return Err(Error::InvalidData(format!(
            "gradient check failed: {:.3e} > {:.0e}",
            report.max_rel_error, report.threshold
        )));
    }
    Ok(())
}
