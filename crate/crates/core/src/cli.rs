//! The `carpoolflow` command line tool.
//!
//! Every subcommand reads its settings from an optional TOML config, with
//! flags taking precedence, and writes its artifacts atomically into the
//! output directory. Errors go to stderr as one JSON object carrying a
//! machine-readable code. Exit codes: 0 success, 1 usage, 2 unreadable
//! input, 3 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, FixedOffset, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::cluster::{cluster_simplified, DEFAULT_CUT_HEIGHT_M};
use crate::error::Error;
use crate::flow::{driver_flow, wait_times, FlowProfile, DEFAULT_BIN_MINUTES, DEFAULT_OPERATING_DAYS};
use crate::io::config::{Config, LineSpec, RouterConfig, ScenarioConfig};
use crate::io::{self, geojson, tables};
use crate::matchprob::{match_probability_table, DEFAULT_SAMPLE_COUNT};
use crate::network::{CarpoolLine, CarpoolNetwork};
use crate::participation::{
    infer_routes, participation_report, HttpRouter, RouterClient, StraightLineRouter, DEFAULT_MAX_IN_FLIGHT,
};
use crate::pipeline::{distinct_days, line_reference, weekly_door_vs_meeting};
use crate::simplify::{compression_rate, LineMatcher, SimplifiedTrace, DEFAULT_BUFFER_RADIUS_M};
use crate::simulate::{generate_traces, simulate_waits, uniform_requests, ArrivalModel, SyntheticScenario};
use crate::time::{parse_offset, DailyWindow, TimeGrid};

pub const SIMPLIFIED_FILE: &str = "simplified.csv";
pub const SIMPLIFY_REPORT_FILE: &str = "simplify_report.json";
pub const FLOW_FILE: &str = "flow.csv";
pub const WAIT_FILE: &str = "wait.csv";
pub const COMPARE_FILE: &str = "compare.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const MATCHPROB_FILE: &str = "matchprob.csv";
pub const PARTICIPATION_FILE: &str = "participation.json";
pub const TRACES_FILE: &str = "traces.csv";
pub const SIMULATED_WAITS_FILE: &str = "simulated_waits.csv";
pub const FLOW_MAP_FILE: &str = "flow_map.geojson";

#[derive(Debug, Parser)]
#[command(name = "carpoolflow", version, about = "Driver flows and passenger waits for carpooling lines")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// TOML config file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Meeting points CSV (id,name,lon,lat)
    #[arg(long, global = true)]
    pub nodes: Option<PathBuf>,
    /// Directed edges CSV (from_id,to_id)
    #[arg(long, global = true)]
    pub edges: Option<PathBuf>,
    /// GPS traces CSV (trace_id,timestamp,lon,lat)
    #[arg(long, global = true)]
    pub traces: Option<PathBuf>,
    /// Simplified traces CSV; used instead of simplifying --traces
    #[arg(long, global = true)]
    pub simplified: Option<PathBuf>,
    /// Origin-destination matrix CSV
    #[arg(long, global = true)]
    pub od: Option<PathBuf>,
    /// Cluster labels CSV for the flow map
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,
    /// Carpooling line, e.g. B>V>S
    #[arg(long, global = true)]
    pub line: Option<String>,
    /// Operating window, HH:MM-HH:MM local time
    #[arg(long, global = true)]
    pub window: Option<String>,
    /// Window accepting meeting point arrivals (default: --window)
    #[arg(long, global = true)]
    pub match_window: Option<String>,
    /// Extra comparison window; repeatable
    #[arg(long = "sub-window", global = true)]
    pub sub_windows: Vec<String>,
    /// UTC offset of all windows, +HH:MM
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub utc_offset: Option<String>,
    /// Time bin length, minutes
    #[arg(long, global = true)]
    pub bin_minutes: Option<u32>,
    /// Buffer radius around meeting points, meters
    #[arg(long = "radius", global = true)]
    pub radius_m: Option<f64>,
    /// Operating days per week for weekly waits
    #[arg(long, global = true)]
    pub operating_days: Option<u32>,
    /// Days behind the traces (default: distinct dates in the data)
    #[arg(long, global = true)]
    pub days: Option<u32>,
    /// Dendrogram cut height, meters
    #[arg(long = "cut-height", global = true)]
    pub cut_height_m: Option<f64>,
    /// Seed for every random stream
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files
    #[arg(long = "out-dir", global = true)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduce traces to their meeting point passes
    Simplify,
    /// Drivers per bin at the line's first meeting point
    Flow,
    /// Predicted passenger waits per bin
    Wait {
        /// Read flows from this CSV instead of computing them
        #[arg(long)]
        flow: Option<PathBuf>,
    },
    /// Weekly door-to-door against meeting point matches
    Compare,
    /// Cluster traces by origin and destination
    Cluster,
    /// Monte Carlo door-to-door match probability
    Matchprob {
        /// Sub-cube counts, comma separated
        #[arg(long = "n", value_delimiter = ',', default_values_t = [1u64, 8, 27, 64, 125])]
        ns: Vec<u64>,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_COUNT)]
        samples: u64,
    },
    /// Driver participation rate against an OD matrix
    Participation {
        /// straight-line or http
        #[arg(long)]
        router: Option<String>,
        /// Departure instant for route queries (RFC 3339)
        #[arg(long)]
        departure: Option<String>,
        /// Geolocated drivers (default: simplified trace count)
        #[arg(long)]
        n_tilde: Option<f64>,
    },
    /// Generate synthetic traces and simulated passenger waits
    Simulate {
        /// Target drivers per bin per day, comma separated
        #[arg(long, value_delimiter = ',')]
        flows: Vec<f64>,
        #[arg(long)]
        scenario_days: Option<u32>,
        #[arg(long)]
        requests_per_bin: Option<u32>,
    },
    /// GeoJSON flow map
    Map,
}

/// Settings after merging flags over the config file.
struct Settings {
    cfg: Config,
    offset: FixedOffset,
}

fn missing(what: &str, flag: &str) -> Error {
    Error::Usage(format!("missing {what}: pass --{flag} or set `{}` in the config", flag.replace('-', "_")))
}

impl Settings {
    fn new(common: &CommonArgs) -> Result<Self, Error> {
        let file = match &common.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let flags = Config {
            nodes: common.nodes.clone(),
            edges: common.edges.clone(),
            traces: common.traces.clone(),
            simplified: common.simplified.clone(),
            od: common.od.clone(),
            labels: common.labels.clone(),
            line: common.line.clone().map(LineSpec::Text),
            window: common.window.clone(),
            match_window: common.match_window.clone(),
            sub_windows: (!common.sub_windows.is_empty()).then(|| common.sub_windows.clone()),
            utc_offset: common.utc_offset.clone(),
            bin_minutes: common.bin_minutes,
            radius_m: common.radius_m,
            operating_days: common.operating_days,
            days: common.days,
            cut_height_m: common.cut_height_m,
            seed: common.seed,
            output_dir: common.output_dir.clone(),
            ..Config::default()
        };
        let cfg = flags.over(file);
        let offset = parse_offset(cfg.utc_offset.as_deref().unwrap_or("+00:00"))?;
        Ok(Self { cfg, offset })
    }

    fn parse_window(&self, s: &str) -> Result<DailyWindow, Error> {
        Ok(s.parse::<DailyWindow>()?.with_offset(self.offset))
    }

    fn window(&self) -> Result<DailyWindow, Error> {
        self.parse_window(self.cfg.window.as_deref().ok_or_else(|| missing("operating window", "window"))?)
    }

    fn match_window(&self) -> Result<DailyWindow, Error> {
        match &self.cfg.match_window {
            Some(w) => self.parse_window(w),
            None => self.window(),
        }
    }

    fn grid(&self) -> Result<TimeGrid, Error> {
        Ok(TimeGrid::with_minutes(self.window()?, self.cfg.bin_minutes.unwrap_or(DEFAULT_BIN_MINUTES))?)
    }

    fn line(&self) -> Result<CarpoolLine, Error> {
        Ok(self.cfg.line.as_ref().ok_or_else(|| missing("carpooling line", "line"))?.to_line()?)
    }

    fn radius(&self) -> f64 {
        self.cfg.radius_m.unwrap_or(DEFAULT_BUFFER_RADIUS_M)
    }

    fn seed(&self) -> u64 {
        self.cfg.seed.unwrap_or(0)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(".")).join(name)
    }

    fn network(&self) -> Result<CarpoolNetwork, Error> {
        let nodes = self.cfg.nodes.as_ref().ok_or_else(|| missing("meeting points file", "nodes"))?;
        let edges = self.cfg.edges.as_ref().ok_or_else(|| missing("edges file", "edges"))?;
        Ok(io::read_network(nodes, edges)?)
    }
}

/// Simplified traces plus the number of days they span.
struct Matched {
    simplified: Vec<SimplifiedTrace>,
    days: u32,
    input_traces: usize,
    issues: Vec<io::RowIssue>,
}

fn matched(s: &Settings, network: &CarpoolNetwork, line: &CarpoolLine) -> Result<Matched, Error> {
    let window = s.window()?;
    if let Some(path) = &s.cfg.simplified {
        let simplified = io::read_simplified(path)?;
        let days = s
            .cfg
            .days
            .unwrap_or_else(|| distinct_days(simplified.iter().map(|t| t.origin.timestamp), &window));
        let input_traces = simplified.len();
        return Ok(Matched { simplified, days, input_traces, issues: Vec::new() });
    }
    let path = s.cfg.traces.as_ref().ok_or_else(|| missing("traces file", "traces"))?;
    let load = io::read_traces(path)?;
    let matcher = LineMatcher::new(network, line, s.radius(), s.match_window()?)?;
    let simplified = matcher.simplify_all(&load.traces);
    let days = s
        .cfg
        .days
        .unwrap_or_else(|| distinct_days(load.traces.iter().map(|t| t.origin().timestamp), &window));
    Ok(Matched { simplified, days, input_traces: load.traces.len(), issues: load.issues })
}

fn write(path: &Path, bytes: &[u8], outputs: &mut Vec<String>) -> Result<(), Error> {
    io::write_atomic(path, bytes)?;
    outputs.push(path.display().to_string());
    Ok(())
}

fn json_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("json values serialize");
    out.push(b'\n');
    out
}

fn router_for(cfg: &RouterConfig, kind: Option<&str>) -> Result<Box<dyn RouterClient>, Error> {
    match kind.or(cfg.kind.as_deref()).unwrap_or("straight-line") {
        "straight-line" => Ok(Box::new(StraightLineRouter::default())),
        "http" => {
            let mut r = match &cfg.url {
                Some(url) => {
                    let mut r = HttpRouter::new(url.clone());
                    r.api_key = std::env::var(crate::participation::router::ROUTER_API_KEY_ENV).ok();
                    r
                }
                None => HttpRouter::from_env()?,
            };
            if let Some(dir) = &cfg.cache_dir {
                r = r.with_cache_dir(dir);
            }
            if let Some(t) = cfg.timeout_s {
                r = r.with_timeout(Duration::from_secs(t));
            }
            if let Some(p) = &cfg.coordinates_pointer {
                r.coordinates_pointer = p.clone();
            }
            Ok(Box::new(r))
        }
        other => Err(Error::Usage(format!("unknown router {other:?}; expected straight-line or http"))),
    }
}

/// Runs one parsed invocation. Returns the summary printed on stdout.
pub fn execute(cli: Cli) -> Result<serde_json::Value, Error> {
    let s = Settings::new(&cli.common)?;
    let mut outputs = Vec::new();
    let mut summary = json!({});
    let name = match &cli.command {
        Command::Simplify => "simplify",
        Command::Flow => "flow",
        Command::Wait { .. } => "wait",
        Command::Compare => "compare",
        Command::Cluster => "cluster",
        Command::Matchprob { .. } => "matchprob",
        Command::Participation { .. } => "participation",
        Command::Simulate { .. } => "simulate",
        Command::Map => "map",
    };
    match cli.command {
        Command::Simplify => {
            let (network, line) = (s.network()?, s.line()?);
            let m = matched(&s, &network, &line)?;
            let rates: Vec<f64> = m.simplified.iter().map(compression_rate).collect();
            let mean = (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64);
            write(&s.out(SIMPLIFIED_FILE), &io::simplified_csv(&m.simplified), &mut outputs)?;
            summary = json!({
                "line": line.to_string(),
                "input_traces": m.input_traces,
                "simplified_traces": m.simplified.len(),
                "mean_compression_rate": mean,
                "rejected_rows": m.issues,
            });
            write(&s.out(SIMPLIFY_REPORT_FILE), &json_bytes(&summary), &mut outputs)?;
        }
        Command::Flow => {
            let (network, line) = (s.network()?, s.line()?);
            let m = matched(&s, &network, &line)?;
            let flow = driver_flow(&m.simplified, &line, &s.grid()?, m.days)?;
            write(&s.out(FLOW_FILE), &tables::flow_csv(&flow), &mut outputs)?;
            summary = json!({ "daily_total": flow.daily_total(), "day_count": flow.day_count });
        }
        Command::Wait { flow } => {
            let flow: FlowProfile = match flow {
                Some(path) => tables::read_flow(&path, s.offset)?,
                None => {
                    let (network, line) = (s.network()?, s.line()?);
                    let m = matched(&s, &network, &line)?;
                    driver_flow(&m.simplified, &line, &s.grid()?, m.days)?
                }
            };
            let waits = wait_times(&flow);
            write(&s.out(WAIT_FILE), &tables::wait_csv(&flow, &waits), &mut outputs)?;
            summary = json!({
                "mean_defined_wait_minutes": waits.mean_defined(),
                "unavailable_bins": waits.waits.iter().filter(|w| w.is_none()).count(),
            });
        }
        Command::Compare => {
            let (network, line) = (s.network()?, s.line()?);
            let m = matched(&s, &network, &line)?;
            let subs = s
                .cfg
                .sub_windows
                .iter()
                .flatten()
                .map(|w| s.parse_window(w))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = weekly_door_vs_meeting(
                &m.simplified,
                &s.window()?,
                &subs,
                line_reference(&network, &line)?,
                s.cfg.cut_height_m.unwrap_or(DEFAULT_CUT_HEIGHT_M),
                s.cfg.operating_days.unwrap_or(DEFAULT_OPERATING_DAYS),
            );
            write(&s.out(COMPARE_FILE), &tables::compare_csv(&rows), &mut outputs)?;
            summary = json!({ "rows": rows.len() });
        }
        Command::Cluster => {
            let (network, line) = (s.network()?, s.line()?);
            let m = matched(&s, &network, &line)?;
            let labels = cluster_simplified(
                &m.simplified,
                line_reference(&network, &line)?,
                s.cfg.cut_height_m.unwrap_or(DEFAULT_CUT_HEIGHT_M),
            );
            write(&s.out(LABELS_FILE), &tables::labels_csv(&labels), &mut outputs)?;
            summary = json!({ "cluster_sizes": labels.sizes });
        }
        Command::Matchprob { ns, samples } => {
            let rows = match_probability_table(&ns, samples, s.seed())?;
            write(&s.out(MATCHPROB_FILE), &tables::matchprob_csv(&rows), &mut outputs)?;
            summary = json!({ "rows": rows.len() });
        }
        Command::Participation { router, departure, n_tilde } => {
            let (network, line) = (s.network()?, s.line()?);
            let od_path = s.cfg.od.as_ref().ok_or_else(|| missing("OD matrix file", "od"))?;
            let od = io::read_od(od_path)?;
            let m = matched(&s, &network, &line)?;
            let rcfg = s.cfg.router.clone().unwrap_or_default();
            let client = router_for(&rcfg, router.as_deref())?;
            let departure: DateTime<Utc> = match departure.or(rcfg.departure) {
                Some(d) => io::parse_instant(&d).map_err(Error::Usage)?,
                None => {
                    let w = s.window()?;
                    let date = m
                        .simplified
                        .iter()
                        .map(|t| w.local_date(t.origin.timestamp))
                        .min()
                        .unwrap_or(NaiveDate::from_ymd_opt(2019, 11, 26).expect("valid date"));
                    w.instant_on(date, w.start_s())
                }
            };
            let routing = infer_routes(
                &od,
                client.as_ref(),
                departure,
                rcfg.max_in_flight.unwrap_or(DEFAULT_MAX_IN_FLIGHT),
            );
            let n = n_tilde.or(s.cfg.n_tilde).unwrap_or(m.simplified.len() as f64);
            let report = participation_report(&line, n, &routing, &od, &network, s.radius())?;
            summary = serde_json::to_value(&report).expect("report serializes");
            write(&s.out(PARTICIPATION_FILE), &json_bytes(&summary), &mut outputs)?;
        }
        Command::Simulate { flows, scenario_days, requests_per_bin } => {
            let (network, line, grid) = (s.network()?, s.line()?, s.grid()?);
            let sc_cfg = ScenarioConfig {
                flows: (!flows.is_empty()).then_some(flows),
                day_count: scenario_days,
                requests_per_bin,
                ..ScenarioConfig::default()
            }
            .over(s.cfg.scenario.clone().unwrap_or_default());
            let flows = sc_cfg.flows.clone().ok_or_else(|| missing("scenario flows", "flows"))?;
            let mut sc = SyntheticScenario::new(
                network,
                line.clone(),
                grid,
                flows.clone(),
                sc_cfg.day_count.unwrap_or(1),
            );
            if let Some(d) = &sc_cfg.first_day {
                sc.first_day =
                    d.parse().map_err(|e| Error::Config(format!("scenario first_day {d:?}: {e}")))?;
            }
            sc.noise_sigma_m = sc_cfg.noise_sigma_m.unwrap_or(sc.noise_sigma_m);
            sc.sampling_period_s = sc_cfg.sampling_period_s.unwrap_or(sc.sampling_period_s);
            sc.speed_mps = sc_cfg.speed_mps.unwrap_or(sc.speed_mps);
            sc.radius_m = s.radius();
            sc.seed = s.seed();
            let traces = generate_traces(&sc)?;
            write(&s.out(TRACES_FILE), &io::traces_csv(&traces), &mut outputs)?;

            let profile = FlowProfile::new(grid, line.to_string(), flows, 1)?;
            let model = ArrivalModel::from_flow(&profile, s.seed())?
                .with_willingness(sc_cfg.willingness.unwrap_or(1.0))?;
            let requests = uniform_requests(
                &grid,
                sc.first_day,
                sc.day_count,
                sc_cfg.requests_per_bin.unwrap_or(1),
                s.seed(),
            );
            let waits = simulate_waits(&model, &requests, None)?;
            let predicted = wait_times(&profile);
            write(
                &s.out(SIMULATED_WAITS_FILE),
                &tables::simulated_waits_csv(&waits, &predicted),
                &mut outputs,
            )?;
            summary = json!({
                "traces": traces.len(),
                "requests": waits.len(),
                "match_window": sc.match_window()?.to_string(),
            });
        }
        Command::Map => {
            let (network, line) = (s.network()?, s.line()?);
            let m = matched(&s, &network, &line)?;
            let labels = s.cfg.labels.as_ref().map(|p| tables::read_labels(p)).transpose()?;
            let map = geojson::flow_map(&m.simplified, labels.as_ref(), &network);
            write(&s.out(FLOW_MAP_FILE), &geojson::flow_map_bytes(&map), &mut outputs)?;
            summary = json!({ "features": map["features"].as_array().map_or(0, Vec::len) });
        }
    }
    Ok(json!({ "command": name, "outputs": outputs, "summary": summary }))
}

pub fn error_json(e: &Error) -> serde_json::Value {
    json!({ "error": { "code": e.code(), "message": e.to_string() } })
}

/// Parses `args`, runs, reports, and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = write!(stderr, "{}", e.render());
            return 1;
        }
        Err(e) => {
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
    };
    match execute(cli) {
        Ok(summary) => {
            let _ = writeln!(stdout, "{summary}");
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_json(&e));
            e.exit_code()
        }
    }
}
