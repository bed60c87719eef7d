use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use stimgen::stimulus::{
    audit_calibration, make_lists, make_pairs, select_calibration, z_sums, zscore_by_participant,
    CalibrationAudit, CalibrationSet, ListParams, PairCandidate, RatingRecord, StimulusList,
    DEFAULT_CALIBRATION_SIZE,
};

use crate::error::{CliError, Result};
use crate::io::{
    create_dir, load_config, read_json, read_lines, read_table, to_json_pretty, to_jsonl,
    write_text, Manifest,
};

#[derive(Debug, Args)]
pub struct CurateArgs {
    #[command(subcommand)]
    mode: CurateMode,
}

#[derive(Debug, Subcommand)]
enum CurateMode {
    /// Z-score ratings and pick calibration sentences
    Calibration(CalibrationArgs),
    /// Split targets into survey lists padded with calibration items
    Lists(ListsArgs),
    /// Build same- and different-sense pairs from two rating tasks
    Pairs(PairsArgs),
}

pub fn run(args: CurateArgs) -> Result<()> {
    match args.mode {
        CurateMode::Calibration(a) => calibration(a),
        CurateMode::Lists(a) => lists(a),
        CurateMode::Pairs(a) => pairs(a),
    }
}

#[derive(Debug, Args)]
struct CalibrationArgs {
    /// Ratings (CSV with a header, or JSON lines): participant_id, sentence_id, rating, verb
    #[arg(long)]
    ratings: PathBuf,
    /// Output directory
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Calibration sentences to select [default: 50]
    #[arg(long)]
    k: Option<usize>,
    /// Size of the initial calibration block [default: 8]
    #[arg(long)]
    block: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CalibrationConfig {
    k: usize,
    block: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            k: DEFAULT_CALIBRATION_SIZE,
            block: ListParams::RATING.block,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationReport {
    #[serde(flatten)]
    set: CalibrationSet,
    audit: CalibrationAudit,
}

fn calibration(args: CalibrationArgs) -> Result<()> {
    let mut cfg: CalibrationConfig = load_config(args.config.as_deref())?;
    crate::config::override_fields!(cfg, args, k, block);
    let ratings: Vec<RatingRecord> = read_table(&args.ratings)?;
    let scores =
        zscore_by_participant(&ratings).map_err(|e| CliError::invalid(&args.ratings, e))?;
    let set = select_calibration(&scores, cfg.k, cfg.block);
    let audit = audit_calibration(&set, &scores);

    create_dir(&args.out_dir)?;
    let scores_path = args.out_dir.join("scores.jsonl");
    let cal_path = args.out_dir.join("calibration.json");
    write_text(&scores_path, &to_jsonl(&scores))?;
    let mut m = Manifest::new("curate calibration", &cfg, None);
    m.input("ratings", &args.ratings)?;
    if set.shortfall {
        m.note(format!(
            "only {} of {} calibration sentences admissible",
            set.selected.len(),
            cfg.k
        ));
    }
    write_text(
        &cal_path,
        &to_json_pretty(&CalibrationReport { set, audit }),
    )?;
    m.output(&scores_path);
    m.output(&cal_path);
    m.write_in(&args.out_dir)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Task {
    Rating,
    Pairs,
}

#[derive(Debug, Args)]
struct ListsArgs {
    /// Target ids, one per line
    #[arg(long)]
    targets: PathBuf,
    /// calibration.json written by `curate calibration`
    #[arg(long)]
    calibration: PathBuf,
    /// Output directory
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// List shape preset: rating (89 items, cap 59) or pairs (62 items, cap 60) [default: rating]
    #[arg(long, value_enum)]
    task: Option<Task>,
    /// Items per list, overriding the preset
    #[arg(long)]
    total: Option<usize>,
    /// Most targets per list, overriding the preset
    #[arg(long)]
    target_cap: Option<usize>,
    /// Shuffle seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Reuse calibration items from the start when a list needs more than are available
    #[arg(long)]
    cycle: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ListsConfig {
    task: Task,
    total: Option<usize>,
    target_cap: Option<usize>,
    seed: u64,
    cycle: bool,
}

impl Default for ListsConfig {
    fn default() -> Self {
        ListsConfig {
            task: Task::Rating,
            total: None,
            target_cap: None,
            seed: 0,
            cycle: false,
        }
    }
}

#[derive(Debug, Serialize)]
struct ListSummary {
    lists: usize,
    targets: usize,
    params: ListParams,
    survey_length: usize,
    per_list: Vec<(usize, usize)>,
}

fn lists(args: ListsArgs) -> Result<()> {
    let mut cfg: ListsConfig = load_config(args.config.as_deref())?;
    crate::config::override_fields!(cfg, args, task, seed);
    if args.total.is_some() {
        cfg.total = args.total;
    }
    if args.target_cap.is_some() {
        cfg.target_cap = args.target_cap;
    }
    cfg.cycle |= args.cycle;
    let mut params = match cfg.task {
        Task::Rating => ListParams::RATING,
        Task::Pairs => ListParams::PAIRS,
    };
    params.total = cfg.total.unwrap_or(params.total);
    params.target_cap = cfg.target_cap.unwrap_or(params.target_cap);

    let targets = read_lines(&args.targets)?;
    let report: CalibrationReport = read_json(&args.calibration)?;
    let lists: Vec<StimulusList> = make_lists(&targets, &report.set, params, cfg.seed, cfg.cycle)
        .map_err(|e| CliError::Validation(e.to_string()))?;

    create_dir(&args.out_dir)?;
    let mut m = Manifest::new("curate lists", &cfg, Some(cfg.seed));
    m.input("targets", &args.targets)?;
    m.input("calibration", &args.calibration)?;
    for l in &lists {
        let path = args.out_dir.join(format!("list_{:02}.json", l.list_number));
        write_text(&path, &to_json_pretty(l))?;
        m.output(&path);
    }
    let summary = ListSummary {
        lists: lists.len(),
        targets: targets.len(),
        params,
        survey_length: params.survey_length(),
        per_list: lists
            .iter()
            .map(|l| (l.target_count, l.items.len()))
            .collect(),
    };
    let summary_path = args.out_dir.join("summary.json");
    write_text(&summary_path, &to_json_pretty(&summary))?;
    m.output(&summary_path);
    m.write_in(&args.out_dir)?;
    log::info!("{} targets into {} lists", targets.len(), lists.len());
    Ok(())
}

#[derive(Debug, Args)]
struct PairsArgs {
    /// Naturalness ratings (CSV or JSON lines)
    #[arg(long)]
    naturalness: PathBuf,
    /// Typicality ratings (CSV or JSON lines)
    #[arg(long)]
    typicality: PathBuf,
    /// Sense tags: sentence_id, verb, sense_id (CSV or JSON lines)
    #[arg(long)]
    senses: PathBuf,
    /// Where to write the pairs (JSON lines)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Deserialize)]
struct SenseTag {
    sentence_id: String,
    verb: String,
    sense_id: String,
}

fn pairs(args: PairsArgs) -> Result<()> {
    let nat: Vec<RatingRecord> = read_table(&args.naturalness)?;
    let typ: Vec<RatingRecord> = read_table(&args.typicality)?;
    let tags: Vec<SenseTag> = read_table(&args.senses)?;
    let nat = zscore_by_participant(&nat).map_err(|e| CliError::invalid(&args.naturalness, e))?;
    let typ = zscore_by_participant(&typ).map_err(|e| CliError::invalid(&args.typicality, e))?;
    let sums = z_sums(&nat, &typ);

    let mut m = Manifest::new("curate pairs", &BTreeMap::<String, String>::new(), None);
    let mut candidates = Vec::new();
    for t in tags {
        match sums.get(&t.sentence_id) {
            Some(&z_sum) => candidates.push(PairCandidate {
                sentence_id: t.sentence_id,
                verb: t.verb,
                sense_id: t.sense_id,
                z_sum,
            }),
            None => m.note(format!(
                "{} lacks ratings in one of the tasks",
                t.sentence_id
            )),
        }
    }
    let pairs = make_pairs(&candidates);
    write_text(&args.out, &to_jsonl(&pairs))?;
    m.input("naturalness", &args.naturalness)?;
    m.input("typicality", &args.typicality)?;
    m.input("senses", &args.senses)?;
    m.output(&args.out);
    m.write_beside(&args.out)?;
    Ok(())
}
