//! `xmlfrag`: annotate, fragment, allocate, query, reassemble, and measure
//! XML documents from the command line.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use xmlfrag::addressing::{annotate, schema_to_json, AnnotatedTree};
use xmlfrag::cluster::{
    allocate, reassemble, route_query, write_nodes, Allocation, FragmentStore, Strategy,
};
use xmlfrag::fragmentation::{
    fragment_by_size, horizontal_fragment, horizontal_range_fragment, hybrid_fragment,
    measure_fragments, parse_predicate, simplex_fragment, vertical_fragment, write_fragments,
    Fragment, Manifest, PathSelector, SimplePredicate, SizeConstraints,
};
use xmlfrag::generate::generate_books;
use xmlfrag::xml_model::{parse_document, serialize_document, XmlTree};

#[derive(Parser)]
#[command(name = "xmlfrag", version, about = "Address-labeled XML fragmentation toolkit")]
struct Cli {
    /// Input document
    #[arg(long = "in", global = true, value_name = "FILE")]
    input: Option<PathBuf>,

    /// Output file, or output directory for commands that write several files
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Manifest file (written by `fragment`, read by the rest)
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,

    /// Generator seed
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Name of the label attribute
    #[arg(long, global = true, default_value = "address")]
    attr: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    Horizontal,
    Range,
    Vertical,
    Hybrid,
    Size,
    Simplex,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    RoundRobin,
    Range,
}

#[derive(Subcommand)]
enum Command {
    /// Label every element with its ordinal/tag-type address
    Annotate {
        /// Also write the tag schema as JSON
        #[arg(long, value_name = "FILE")]
        schema_out: Option<PathBuf>,
    },
    /// Split a document into fragment files plus a manifest
    Fragment {
        #[arg(long, value_enum)]
        model: Model,
        /// Selection predicate `path op value` (repeatable; horizontal/hybrid)
        #[arg(long = "predicate", value_name = "PRED")]
        predicates: Vec<String>,
        /// Number of ordinal-range parts (range)
        #[arg(long)]
        parts: Option<u64>,
        /// Subtree selector such as /books/book/TableOfContent (vertical/hybrid)
        #[arg(long, value_name = "SELECTOR")]
        path: Option<String>,
        /// Attribute recording removed-subtree addresses (vertical/hybrid)
        #[arg(long, default_value = "ref")]
        ref_attr: String,
        /// Byte budget per fragment (size)
        #[arg(long)]
        threshold: Option<u64>,
        /// Byte ceiling per fragment (simplex)
        #[arg(long)]
        max_size: Option<u64>,
        /// Fanout ceiling per fragment (simplex)
        #[arg(long)]
        max_width: Option<u64>,
        /// Height ceiling per fragment (simplex)
        #[arg(long)]
        max_depth: Option<u64>,
    },
    /// Place fragment files onto simulated nodes
    Allocate {
        #[arg(long)]
        nodes: usize,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
    },
    /// Route a predicate query across allocated nodes, print the result JSON
    Query {
        #[arg(long, value_name = "PRED")]
        predicate: String,
        /// allocation.json written by `allocate` (nodes/ lives beside it)
        #[arg(long, value_name = "FILE")]
        allocation: PathBuf,
    },
    /// Rebuild the labeled document from its fragments
    Reassemble,
    /// Print size and shape measurements of a fragment set as JSON
    Stats,
    /// Emit a synthetic book catalogue
    Generate {
        #[arg(long)]
        records: usize,
    },
}

enum AppError {
    Usage(String),
    Data(xmlfrag::Error),
}

impl From<xmlfrag::Error> for AppError {
    fn from(e: xmlfrag::Error) -> Self {
        AppError::Data(e)
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Data(xmlfrag::Error::Io(e))
    }
}

fn usage(msg: impl Into<String>) -> AppError {
    AppError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match &cli.command {
        Command::Annotate { schema_out } => cmd_annotate(&cli, schema_out.as_deref()),
        Command::Fragment { .. } => cmd_fragment(&cli),
        Command::Allocate { nodes, strategy } => cmd_allocate(&cli, *nodes, *strategy),
        Command::Query {
            predicate,
            allocation,
        } => cmd_query(&cli, predicate, allocation),
        Command::Reassemble => cmd_reassemble(&cli),
        Command::Stats => cmd_stats(&cli),
        Command::Generate { records } => cmd_generate(&cli, *records),
    }
}

fn require_in(cli: &Cli) -> Result<&Path, AppError> {
    cli.input.as_deref().ok_or_else(|| usage("--in is required"))
}

fn require_out(cli: &Cli) -> Result<&Path, AppError> {
    cli.out.as_deref().ok_or_else(|| usage("--out is required"))
}

fn require_manifest(cli: &Cli) -> Result<&Path, AppError> {
    cli.manifest
        .as_deref()
        .ok_or_else(|| usage("--manifest is required"))
}

fn read_tree(path: &Path) -> Result<XmlTree, AppError> {
    Ok(parse_document(&std::fs::read(path)?)?)
}

fn write_tree(path: &Path, tree: &XmlTree) -> Result<(), AppError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(std::fs::write(path, serialize_document(tree))?)
}

fn cmd_annotate(cli: &Cli, schema_out: Option<&Path>) -> Result<(), AppError> {
    let tree = read_tree(require_in(cli)?)?;
    let labeled = annotate(&tree, &cli.attr)?;
    write_tree(require_out(cli)?, &labeled.tree)?;
    if let Some(path) = schema_out {
        std::fs::write(path, schema_to_json(&labeled.schema, &labeled.attr_name))?;
    }
    Ok(())
}

/// Loads a document for fragmentation, labeling it first unless the root
/// already carries the label attribute.
fn load_labeled(cli: &Cli) -> Result<AnnotatedTree, AppError> {
    let tree = read_tree(require_in(cli)?)?;
    if tree.root.attr(&cli.attr).is_some() {
        Ok(AnnotatedTree::from_labeled(tree, &cli.attr)?)
    } else {
        Ok(annotate(&tree, &cli.attr)?)
    }
}

fn parse_predicates(raw: &[String]) -> Result<Vec<SimplePredicate>, AppError> {
    raw.iter()
        .map(|s| parse_predicate(s).map_err(|e| usage(e.to_string())))
        .collect()
}

fn cmd_fragment(cli: &Cli) -> Result<(), AppError> {
    let Command::Fragment {
        model,
        predicates,
        parts,
        path,
        ref_attr,
        threshold,
        max_size,
        max_width,
        max_depth,
    } = &cli.command
    else {
        unreachable!("dispatched on Fragment");
    };
    let labeled = load_labeled(cli)?;
    let selector = path
        .as_deref()
        .map(|s| PathSelector::parse(s).map_err(|e| usage(e.to_string())))
        .transpose()?;

    let (fragments, manifest, overlaps): (Vec<Fragment>, Manifest, Vec<_>) = match model {
        Model::Horizontal => {
            if predicates.is_empty() {
                return Err(usage("--model horizontal needs at least one --predicate"));
            }
            horizontal_fragment(&labeled, &parse_predicates(predicates)?)?
        }
        Model::Range => {
            let parts = parts.ok_or_else(|| usage("--model range needs --parts"))?;
            if parts == 0 {
                return Err(usage("--parts must be at least 1"));
            }
            let (f, m) = horizontal_range_fragment(&labeled, parts)?;
            (f, m, Vec::new())
        }
        Model::Vertical => {
            let sel = selector.ok_or_else(|| usage("--model vertical needs --path"))?;
            let (rem, proj, m) = vertical_fragment(&labeled, &sel, ref_attr)?;
            (vec![rem, proj], m, Vec::new())
        }
        Model::Hybrid => {
            let sel = selector.ok_or_else(|| usage("--model hybrid needs --path"))?;
            hybrid_fragment(&labeled, &parse_predicates(predicates)?, &sel, ref_attr)?
        }
        Model::Size => {
            let threshold = threshold.ok_or_else(|| usage("--model size needs --threshold"))?;
            if threshold == 0 {
                return Err(usage("--threshold must be at least 1"));
            }
            let (f, m) = fragment_by_size(&labeled, threshold as usize)?;
            (f, m, Vec::new())
        }
        Model::Simplex => {
            let (Some(size), Some(width), Some(depth)) = (max_size, max_width, max_depth) else {
                return Err(usage(
                    "--model simplex needs --max-size, --max-width and --max-depth",
                ));
            };
            if *size == 0 || *width == 0 || *depth == 0 {
                return Err(usage("simplex ceilings must be at least 1"));
            }
            let constraints = SizeConstraints {
                max_size: *size as usize,
                max_width: *width as usize,
                max_depth: *depth as usize,
            };
            let (f, m) = simplex_fragment(&labeled, &constraints)?;
            (f, m, Vec::new())
        }
    };

    for addr in &overlaps {
        eprintln!("warning: record {addr} satisfies more than one predicate");
    }

    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    write_fragments(&out_dir, &fragments)?;
    // the manifest is written last so a failed run leaves none behind
    let manifest_path = cli
        .manifest
        .clone()
        .unwrap_or_else(|| out_dir.join(format!("{}.manifest.json", manifest.origin)));
    manifest.save(&manifest_path)?;
    Ok(())
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_allocate(cli: &Cli, nodes: usize, strategy: StrategyArg) -> Result<(), AppError> {
    if nodes == 0 {
        return Err(usage("--nodes must be at least 1"));
    }
    let manifest_path = require_manifest(cli)?;
    let manifest = Manifest::load(manifest_path)?;
    let store = FragmentStore::from_dir(&manifest_dir(manifest_path), &manifest)?;
    let strategy = match strategy {
        StrategyArg::RoundRobin => Strategy::RoundRobin,
        StrategyArg::Range => Strategy::Range,
    };
    let allocation = allocate(&manifest, nodes, strategy)?;
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    write_nodes(&out_dir.join("nodes"), &manifest, &allocation, &store)?;
    allocation.save(&out_dir.join("allocation.json"))?;
    Ok(())
}

fn cmd_query(cli: &Cli, predicate: &str, allocation_path: &Path) -> Result<(), AppError> {
    let predicate = parse_predicate(predicate).map_err(|e| usage(e.to_string()))?;
    let manifest = Manifest::load(require_manifest(cli)?)?;
    let allocation = Allocation::load(allocation_path)?;
    let nodes_dir = manifest_dir(allocation_path).join("nodes");
    let store = FragmentStore::from_nodes(&nodes_dir, &manifest, &allocation)?;
    let result = route_query(&predicate, &manifest, &allocation, &store)?;
    println!("{}", result.to_json());
    Ok(())
}

fn cmd_reassemble(cli: &Cli) -> Result<(), AppError> {
    let manifest_path = require_manifest(cli)?;
    let manifest = Manifest::load(manifest_path)?;
    let store = FragmentStore::from_dir(&manifest_dir(manifest_path), &manifest)?;
    let tree = reassemble(&manifest, &store)?;
    write_tree(require_out(cli)?, &tree)
}

fn cmd_stats(cli: &Cli) -> Result<(), AppError> {
    let manifest_path = require_manifest(cli)?;
    let manifest = Manifest::load(manifest_path)?;
    let store = FragmentStore::from_dir(&manifest_dir(manifest_path), &manifest)?;
    let parts: Vec<(&str, &XmlTree)> = manifest
        .fragments
        .iter()
        .map(|e| {
            (
                e.fragment_id.as_str(),
                store.get(&e.fragment_id).expect("store is complete"),
            )
        })
        .collect();
    let stats = measure_fragments(parts)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&stats).expect("stats serialize")
    );
    Ok(())
}

fn cmd_generate(cli: &Cli, records: usize) -> Result<(), AppError> {
    let tree = generate_books(records, cli.seed);
    write_tree(require_out(cli)?, &tree)
}
