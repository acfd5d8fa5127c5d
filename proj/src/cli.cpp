#include "aggrml/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "aggrml/aggregate.hpp"
#include "aggrml/dataset.hpp"
#include "aggrml/errors.hpp"
#include "aggrml/harness.hpp"
#include "aggrml/random.hpp"
#include "aggrml/text.hpp"

namespace aggrml {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kAll = "aggregate,run,bench,compare";
constexpr std::string_view kJobs = "run,bench,compare";

constexpr FlagSpec kFlags[] = {
    {"--input", "PATH|synth[:SPEC]",
     "input file, or synthetic data: synth:n,dims,clusters,spread for dense "
     "points, synth:users,items,groups,density for ratings (default synth)",
     kAll},
    {"--format", "dense|ratings",
     "input format (default dense for knn, ratings for cf)", kAll},
    {"--unlabeled", "", "dense input has no trailing label column", kAll},
    {"--workload", "knn|cf", "workload to run (default knn)", kAll},
    {"--pipeline", "exact|accurateml|sampling",
     "pipeline of a single run (default accurateml)", "run"},
    {"--ratio", "R[,R...]", "compression ratio, repeatable (default 10)", kAll},
    {"--sweep-ratio", "R,R,...", "list of compression ratios", "bench,compare"},
    {"--epsilon", "E[,E...]",
     "refinement threshold in [0,1], repeatable (default 0.05)", kJobs},
    {"--sweep-epsilon", "START:STOP:STEP", "grid of refinement thresholds",
     "bench,compare"},
    {"--sample-fraction", "F",
     "fraction of each partition sampled, in (0,1] (default 0.1)", "run"},
    {"--k-nn", "K", "neighbours per query (default 5)", kJobs},
    {"--norm", "S", "order of the distance norm, >= 1 (default 2)", kJobs},
    {"--hash-functions", "T",
     "hash functions concatenated into one bucket key (default 4)", kAll},
    {"--test-fraction", "F",
     "held-out share: points for knn (default 0.005), each active user's "
     "ratings for cf (default 0.2)",
     kJobs},
    {"--active-users", "N", "cf users whose ratings are predicted (default 100)",
     kJobs},
    {"--partitions", "M", "map tasks (default 4)", kAll},
    {"--threads", "N", "map tasks run concurrently (default 1)", kJobs},
    {"--seed", "S", "master seed (default $AGGRML_SEED, else 0)", kAll},
    {"--include-agg-budget", "",
     "charge grouping and aggregation work to the sampling budget", "compare"},
    {"--wall-times", "", "write measured times instead of 0 to the report",
     kJobs},
    {"--out", "DIR", "directory receiving every output file (required)", kAll},
};

struct CommandSpec {
  std::string_view name;
  std::string_view help;
};

constexpr CommandSpec kCommands[] = {
    {"aggregate", "group and aggregate each partition, write index files"},
    {"run", "run one job"},
    {"bench", "exact run plus AccurateML over a ratio x epsilon grid"},
    {"compare", "AccurateML against budget-matched random sampling"},
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool accepts(const FlagSpec& flag, std::string_view command) {
  for (auto c : text::split(flag.commands, ',')) {
    if (c == command) return true;
  }
  return false;
}

std::string flag_footer() {
  std::string s = "Flags (subcommands accepting each in brackets):\n";
  for (const auto& f : kFlags) {
    std::string head = "  " + std::string(f.name);
    if (!f.value.empty()) head += " " + std::string(f.value);
    s += head + "\n      " + std::string(f.help) + " [" +
         std::string(f.commands) + "]\n";
  }
  s += "\nExit codes: 0 success, 1 runtime failure, 2 usage error.";
  return s;
}

// CLI11 model built from the registry. Values are kept as strings and
// validated afterwards so range errors carry our own messages.
struct Model {
  CLI::App app{"Approximate kNN and CF jobs over aggregated data points",
               "aggrml"};
  // Per subcommand, keyed by flag name.
  std::map<std::string, std::map<std::string, std::vector<std::string>>> values;
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  std::map<std::string, CLI::App*> commands;
};

std::unique_ptr<Model> build_model() {
  auto m = std::make_unique<Model>();
  m->app.require_subcommand(1);
  m->app.footer(flag_footer());
  for (const auto& c : kCommands) {
    auto* sub = m->app.add_subcommand(std::string(c.name), std::string(c.help));
    const std::string command(c.name);
    m->commands[command] = sub;
    for (const auto& f : kFlags) {
      if (!accepts(f, c.name)) continue;
      const std::string name(f.name);
      if (f.value.empty()) {
        sub->add_flag(name, m->counts[command][name], std::string(f.help));
      } else {
        sub->add_option(name, m->values[command][name], std::string(f.help))
            ->type_name(std::string(f.value))
            ->allow_extra_args(false);
      }
    }
  }
  return m;
}

// Parsed values of the chosen subcommand.
class Args {
 public:
  Args(std::string command, const Model& m) : command_(std::move(command)) {
    for (const auto& [name, v] : m.values.at(command_)) {
      if (!v.empty()) values_[name] = v;
    }
    for (const auto& [name, n] : m.counts.at(command_)) {
      if (n > 0) flags_[name] = n;
    }
  }

  const std::string& command() const { return command_; }
  bool flag(const std::string& name) const { return flags_.count(name) > 0; }

  // Every occurrence, comma lists flattened.
  std::vector<std::string> list(const std::string& name) const {
    std::vector<std::string> out;
    const auto it = values_.find(name);
    if (it == values_.end()) return out;
    for (const auto& v : it->second) {
      for (auto piece : text::split(v, ',')) out.emplace_back(text::trim(piece));
    }
    return out;
  }

  std::optional<std::string> one(const std::string& name) const {
    const auto it = values_.find(name);
    if (it == values_.end()) return std::nullopt;
    if (it->second.size() > 1) throw UsageError(name + " given more than once");
    return it->second.front();
  }

 private:
  std::string command_;
  std::map<std::string, std::vector<std::string>> values_;
  std::map<std::string, std::size_t> flags_;
};

double to_double(const std::string& flag, std::string_view s) {
  const auto v = text::parse_double(s);
  if (!v || !std::isfinite(*v)) {
    throw UsageError(flag + " expects a number, got '" + std::string(s) + "'");
  }
  return *v;
}

std::size_t to_count(const std::string& flag, std::string_view s) {
  const auto v = text::parse_int<std::size_t>(s);
  if (!v) {
    throw UsageError(flag + " expects a non-negative integer, got '" +
                     std::string(s) + "'");
  }
  return *v;
}

double in_range(const std::string& flag, double v, double lo, double hi,
                bool lo_open = false) {
  if (v < lo || v > hi || (lo_open && v == lo)) {
    throw UsageError(flag + " must be in " + (lo_open ? "(" : "[") +
                     text::format_double(lo) + ", " + text::format_double(hi) +
                     "], got " + text::format_double(v));
  }
  return v;
}

std::size_t at_least(const std::string& flag, std::size_t v, std::size_t lo) {
  if (v < lo) {
    throw UsageError(flag + " must be at least " + std::to_string(lo) +
                     ", got " + std::to_string(v));
  }
  return v;
}

// START:STOP:STEP, inclusive of STOP, each value rounded to 1e-9.
std::vector<double> parse_sweep(const std::string& flag, std::string_view spec) {
  const auto parts = text::split(spec, ':');
  if (parts.size() != 3) {
    throw UsageError(flag + " expects START:STOP:STEP, got '" + std::string(spec) + "'");
  }
  const double start = to_double(flag, parts[0]);
  const double stop = to_double(flag, parts[1]);
  const double step = to_double(flag, parts[2]);
  if (!(step > 0.0)) throw UsageError(flag + " step must be positive");
  if (stop < start) throw UsageError(flag + " stop is below start");
  std::vector<double> out;
  for (std::size_t i = 0;; ++i) {
    const double v = start + static_cast<double>(i) * step;
    if (v > stop + 1e-9) break;
    out.push_back(std::round(v * 1e9) / 1e9);
    if (out.size() > 100000) throw UsageError(flag + " produces too many values");
  }
  return out;
}

struct Settings {
  std::string command;
  std::string input = "synth";
  std::string format;
  bool unlabeled = false;
  WorkloadKind workload = WorkloadKind::knn;
  Pipeline pipeline = Pipeline::accurateml;
  std::vector<double> ratios;
  std::vector<double> epsilons;
  double sample_fraction = 0.1;
  std::size_t k_nn = 5;
  double norm = 2.0;
  std::size_t hash_functions = 4;
  double test_fraction = 0.1;
  std::size_t active_users = 100;
  std::size_t partitions = 4;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  bool include_agg_budget = false;
  bool wall_times = false;
  fs::path out;
};

std::uint64_t resolve_seed(const Args& a) {
  if (const auto s = a.one("--seed")) {
    const auto v = text::parse_int<std::uint64_t>(*s);
    if (!v) throw UsageError("--seed expects a non-negative integer, got '" + *s + "'");
    return *v;
  }
  if (const char* env = std::getenv("AGGRML_SEED"); env && *env) {
    const auto v = text::parse_int<std::uint64_t>(env);
    if (!v) {
      throw UsageError("AGGRML_SEED must be a non-negative integer, got '" +
                       std::string(env) + "'");
    }
    return *v;
  }
  return 0;
}

Settings resolve(const Args& a) {
  Settings s;
  s.command = a.command();
  const bool job = s.command != "aggregate";

  const auto out = a.one("--out");
  if (!out || out->empty()) throw UsageError("--out is required");
  s.out = *out;

  try {
    if (const auto w = a.one("--workload")) s.workload = parse_workload(*w);
    if (const auto p = a.one("--pipeline")) s.pipeline = parse_pipeline(*p);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  s.format = s.workload == WorkloadKind::knn ? "dense" : "ratings";
  if (const auto f = a.one("--format")) {
    if (*f != "dense" && *f != "ratings") {
      throw UsageError("--format must be dense or ratings, got '" + *f + "'");
    }
    s.format = *f;
  }
  if (job && (s.format == "dense") != (s.workload == WorkloadKind::knn)) {
    throw UsageError("workload " + std::string(to_string(s.workload)) +
                     " cannot run on " + s.format + " input");
  }
  s.unlabeled = a.flag("--unlabeled");
  if (job && s.unlabeled) throw UsageError("knn needs labeled input");

  if (const auto in = a.one("--input")) s.input = *in;
  if (s.input.rfind("synth", 0) != 0) {
    std::error_code ec;
    if (!fs::is_regular_file(s.input, ec)) {
      throw UsageError("input file '" + s.input + "' does not exist");
    }
  }

  for (const auto& name : {std::string("--ratio"), std::string("--sweep-ratio")}) {
    for (const auto& v : a.list(name)) {
      const double r = to_double(name, v);
      if (!(r >= 1.0)) {
        throw UsageError(name + " must be >= 1, got " + text::format_double(r));
      }
      s.ratios.push_back(r);
    }
  }
  if (s.ratios.empty()) s.ratios.push_back(10.0);

  for (const auto& v : a.list("--epsilon")) {
    s.epsilons.push_back(in_range("--epsilon", to_double("--epsilon", v), 0.0, 1.0));
  }
  if (const auto sweep = a.one("--sweep-epsilon")) {
    for (double e : parse_sweep("--sweep-epsilon", *sweep)) {
      s.epsilons.push_back(in_range("--sweep-epsilon", e, 0.0, 1.0));
    }
  }
  if (s.epsilons.empty()) s.epsilons.push_back(0.05);

  if (s.command == "run" || s.command == "aggregate") {
    if (s.ratios.size() > 1) throw UsageError(s.command + " takes a single --ratio");
    if (s.epsilons.size() > 1) throw UsageError(s.command + " takes a single --epsilon");
  }

  if (const auto v = a.one("--sample-fraction")) {
    s.sample_fraction = in_range("--sample-fraction",
                                 to_double("--sample-fraction", *v), 0.0, 1.0, true);
  }
  if (const auto v = a.one("--k-nn")) s.k_nn = at_least("--k-nn", to_count("--k-nn", *v), 1);
  if (const auto v = a.one("--norm")) {
    s.norm = to_double("--norm", *v);
    if (!(s.norm >= 1.0)) throw UsageError("--norm must be >= 1");
  }
  if (const auto v = a.one("--hash-functions")) {
    s.hash_functions = at_least("--hash-functions", to_count("--hash-functions", *v), 1);
  }
  s.test_fraction = s.workload == WorkloadKind::knn ? 0.005 : 0.2;
  if (const auto v = a.one("--test-fraction")) {
    s.test_fraction = to_double("--test-fraction", *v);
    if (!(s.test_fraction > 0.0 && s.test_fraction < 1.0)) {
      throw UsageError("--test-fraction must be in (0, 1), got " + *v);
    }
  }
  if (const auto v = a.one("--active-users")) {
    s.active_users = at_least("--active-users", to_count("--active-users", *v), 1);
  }
  if (const auto v = a.one("--partitions")) {
    s.partitions = at_least("--partitions", to_count("--partitions", *v), 1);
  }
  if (const auto v = a.one("--threads")) {
    s.threads = at_least("--threads", to_count("--threads", *v), 1);
  }
  s.seed = resolve_seed(a);
  s.include_agg_budget = a.flag("--include-agg-budget");
  s.wall_times = a.flag("--wall-times");
  return s;
}

// All files go through here so nothing lands outside --out.
class OutDir {
 public:
  explicit OutDir(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec || !fs::is_directory(root_)) {
      throw Error("cannot create output directory '" + root_.string() + "'");
    }
  }

  fs::path file(std::string_view name) const {
    if (name.empty() || name.find('/') != std::string_view::npos ||
        name == "." || name == "..") {
      throw Error("refusing to write '" + std::string(name) + "'");
    }
    return root_ / fs::path(name);
  }

  void write(std::string_view name, const std::string& content) const {
    const auto path = file(name);
    std::ofstream f(path, std::ios::binary);
    f << content;
    f.close();
    if (!f) throw Error("cannot write '" + path.string() + "'");
  }

 private:
  fs::path root_;
};

std::vector<double> synth_args(const std::string& input, std::size_t count) {
  if (input == "synth") return {};
  if (input.rfind("synth:", 0) != 0) {
    throw UsageError("unknown synthetic input '" + input + "'");
  }
  std::vector<double> out;
  for (auto piece : text::split(std::string_view(input).substr(6), ',')) {
    out.push_back(to_double("--input", piece));
  }
  if (out.size() != count) {
    throw UsageError("--input synth: expects " + std::to_string(count) +
                     " comma-separated values");
  }
  return out;
}

std::size_t whole(double v, const char* what) {
  if (!(v >= 1.0) || v != std::floor(v) || v > 1e9) {
    throw UsageError(std::string("synthetic ") + what + " must be a positive integer");
  }
  return static_cast<std::size_t>(v);
}

bool is_synth(const Settings& s) { return s.input.rfind("synth", 0) == 0; }

DenseDataset dense_input(const Settings& s) {
  if (!is_synth(s)) return load_dense(s.input, !s.unlabeled);
  auto v = synth_args(s.input, 4);
  if (v.empty()) v = {2000, 16, 100, 0.2};
  return synth_clustered(whole(v[0], "points"), whole(v[1], "dims"),
                         whole(v[2], "clusters"), v[3],
                         derive_seed(s.seed, streams::kSynth));
}

RatingMatrix rating_input(const Settings& s) {
  if (!is_synth(s)) return load_ratings(s.input);
  auto v = synth_args(s.input, 4);
  if (v.empty()) v = {500, 200, 10, 0.3};
  return synth_ratings(whole(v[0], "users"), whole(v[1], "items"),
                       whole(v[2], "groups"), v[3],
                       derive_seed(s.seed, streams::kSynth));
}

std::string config_text(const Settings& s) {
  std::ostringstream o;
  auto list = [](const std::vector<double>& v) {
    std::string r;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) r += ',';
      r += text::format_double(v[i]);
    }
    return r;
  };
  o << "command=" << s.command << '\n'
    << "input=" << s.input << '\n'
    << "format=" << s.format << '\n'
    << "unlabeled=" << (s.unlabeled ? 1 : 0) << '\n'
    << "workload=" << to_string(s.workload) << '\n';
  if (s.command == "run") o << "pipeline=" << to_string(s.pipeline) << '\n';
  o << "ratios=" << list(s.ratios) << '\n';
  if (s.command != "aggregate") {
    o << "epsilons=" << list(s.epsilons) << '\n';
    if (s.command == "run") {
      o << "sample_fraction=" << text::format_double(s.sample_fraction) << '\n';
    }
    o << "k_nn=" << s.k_nn << '\n'
      << "norm=" << text::format_double(s.norm) << '\n'
      << "test_fraction=" << text::format_double(s.test_fraction) << '\n';
    if (s.workload == WorkloadKind::cf) o << "active_users=" << s.active_users << '\n';
    o << "threads=" << s.threads << '\n'
      << "include_agg_budget=" << (s.include_agg_budget ? 1 : 0) << '\n'
      << "wall_times=" << (s.wall_times ? 1 : 0) << '\n';
  }
  o << "hash_functions=" << s.hash_functions << '\n'
    << "partitions=" << s.partitions << '\n'
    << "seed=" << s.seed << '\n';
  return o.str();
}

std::string part_name(std::size_t task) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "part-%05zu.aggidx", task);
  return buf;
}

int cmd_aggregate(const Settings& s, std::ostream& out) {
  const OutDir dir(s.out);
  BucketingOptions opts;
  opts.target_ratio = s.ratios.front();
  opts.hash_functions = s.hash_functions;

  std::string csv =
      "partition,points,buckets,target_ratio,achieved_ratio,max_bucket_size,"
      "grouping_ops,aggregation_ops\n";
  auto emit = [&](std::size_t task, std::size_t dims, const Bucketing& b) {
    write_index(dir.file(part_name(task)), IndexFile{dims, b.index, b.points});
    csv += std::to_string(task) + ',' + std::to_string(b.index.point_count()) +
           ',' + std::to_string(b.index.bucket_count()) + ',' +
           text::format_double(opts.target_ratio) + ',' +
           text::format_double(b.index.achieved_ratio()) + ',' +
           std::to_string(b.index.max_bucket_size()) + ',' +
           std::to_string(b.stats.grouping_ops) + ',' +
           std::to_string(b.stats.aggregation_ops) + '\n';
  };

  if (s.format == "dense") {
    const auto data = dense_input(s);
    if (s.partitions > data.size()) throw Error("more partitions than points");
    for (const auto& part : partition(data, s.partitions)) {
      opts.seed = derive_seed(s.seed, streams::kLsh, part.id);
      emit(part.id, data.dims, build_buckets(data, part.members, opts));
    }
  } else {
    const auto ratings = rating_input(s);
    if (s.partitions > ratings.users()) throw Error("more partitions than users");
    for (const auto& part : partition(ratings, s.partitions)) {
      opts.seed = derive_seed(s.seed, streams::kLsh, part.id);
      emit(part.id, ratings.items(), build_user_buckets(ratings, part.members, opts));
    }
  }
  dir.write("aggregate.csv", csv);
  dir.write("config.txt", config_text(s));
  out << csv;
  return 0;
}

int cmd_jobs(const Settings& s, std::ostream& out) {
  const OutDir dir(s.out);
  const auto experiment =
      s.workload == WorkloadKind::knn
          ? Experiment::knn(dense_input(s), s.test_fraction, s.seed)
          : Experiment::cf(rating_input(s), s.active_users, s.test_fraction, s.seed);

  JobConfig base;
  base.workload = s.workload;
  base.seed = s.seed;
  base.partitions = s.partitions;
  base.threads = s.threads;
  base.hash_functions = s.hash_functions;
  base.knn.k_nn = s.k_nn;
  base.knn.norm_order = s.norm;

  std::string csv = std::string(csv_header()) + '\n';
  auto add = [&](const RunReport& r) { csv += csv_row(r, s.wall_times) + '\n'; };

  JobConfig exact_cfg = base;
  exact_cfg.pipeline = Pipeline::exact;
  const auto exact = run_job(experiment, exact_cfg);

  if (s.command == "run") {
    JobConfig cfg = base;
    cfg.pipeline = s.pipeline;
    cfg.ratio = s.ratios.front();
    cfg.epsilon = s.epsilons.front();
    cfg.sample_fraction = s.sample_fraction;
    add(cfg.pipeline == Pipeline::exact ? exact
                                        : run_job(experiment, cfg, exact.accuracy));
  } else {
    add(exact);
    for (double ratio : s.ratios) {
      for (double eps : s.epsilons) {
        JobConfig cfg = base;
        cfg.ratio = ratio;
        cfg.epsilon = eps;
        const auto aml = run_job(experiment, cfg, exact.accuracy);
        add(aml);
        if (s.command == "compare") {
          cfg.pipeline = Pipeline::sampling;
          cfg.sample_fraction = match_budget(aml, s.include_agg_budget);
          add(run_job(experiment, cfg, exact.accuracy));
        }
      }
    }
  }
  dir.write("report.csv", csv);
  dir.write("config.txt", config_text(s));
  out << csv;
  return 0;
}

std::string one_line(std::string msg) {
  for (auto& c : msg) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return msg;
}

}  // namespace

std::span<const FlagSpec> flag_registry() { return kFlags; }

std::vector<std::string> parser_flag_names() {
  const auto m = build_model();
  std::vector<std::string> names;
  for (const auto& [_, sub] : m->commands) {
    for (const auto* opt : sub->get_options()) {
      for (const auto& n : opt->get_lnames()) {
        if (n != "help") names.push_back("--" + n);
      }
    }
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

std::string cli_help() { return build_model()->app.help(); }

int run_cli(std::span<const std::string> args, std::ostream& out,
            std::ostream& err) {
  auto m = build_model();
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    m->app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &m->app;
    for (const auto* sub : m->app.get_subcommands()) target = sub;
    out << target->help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    const auto* sub = m->app.get_subcommands().front();
    const Settings settings = resolve(Args(sub->get_name(), *m));
    if (settings.command == "aggregate") return cmd_aggregate(settings, out);
    return cmd_jobs(settings, out);
  } catch (const UsageError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return 1;
  }
}

}  // namespace aggrml
