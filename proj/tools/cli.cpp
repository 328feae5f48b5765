//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "cli.h"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tagmol/error.h"
#include "tagmol/evalmetrics.h"
#include "tagmol/hash.h"
#include "tagmol/training.h"

#ifndef TAGMOL_VERSION
#define TAGMOL_VERSION "dev"
#endif

namespace tagmol::cli {
namespace {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Thrown for user-facing usage mistakes that CLI11 cannot catch itself.
struct UsageError: std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path &p, const std::string &text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out)
    throw std::runtime_error("cannot write " + p.string());
}

json dataset_entry(const std::string &path, std::size_t records) {
  return { { "path", path },
           { "fnv1a64", hex64(fnv1a(read_file(path))) },
           { "records", records } };
}

// Lowest-precedence seed source.
std::optional<std::uint64_t> env_seed() {
  const char *s = std::getenv("TAGMOL_SEED");
  if (s == nullptr || *s == '\0')
    return std::nullopt;
  char *end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (errno != 0 || *end != '\0' || *s == '-')
    throw ConfigError(std::string("TAGMOL_SEED is not an unsigned integer: ")
                      + s);
  return v;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t> &flag) {
  if (flag)
    return *flag;
  return env_seed().value_or(0);
}

// "--key value" / "--key=value" pairs left over by CLI11, keyed by config
// field name; dashes in keys read as underscores.
std::vector<std::pair<std::string, std::string>>
override_pairs(const std::vector<std::string> &extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string &a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() == 2)
      throw UsageError("unexpected argument '" + a + "'");
    std::string key = a.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size())
        throw UsageError("option --" + key + " needs a value");
      value = extras[++i];
    }
    std::replace(key.begin(), key.end(), '-', '_');
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

// A flag value is read as JSON when it parses and the field accepts that
// type, otherwise as a plain string (paths, variant names).
TrainConfig apply_override(TrainConfig cfg, const std::string &key,
                           const std::string &value) {
  json parsed;
  bool is_json = true;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error &) {
    is_json = false;
  }
  if (is_json) {
    try {
      return apply_config_json(cfg, json { { key, parsed } }.dump());
    } catch (const ConfigError &) {
      if (parsed.is_string())
        throw;
    }
  }
  return apply_config_json(cfg, json { { key, value } }.dump());
}

// default < TAGMOL_SEED < config file < flags
TrainConfig resolve_config(const std::string &config_path,
                           const std::vector<std::string> &extras) {
  TrainConfig cfg;
  if (auto s = env_seed())
    cfg.seed = *s;
  if (!config_path.empty())
    cfg = apply_config_json(cfg, read_file(config_path));
  for (const auto &[k, v]: override_pairs(extras))
    cfg = apply_override(cfg, k, v);
  validate_config(cfg);
  return cfg;
}

std::vector<PairRecord> load_data(const std::string &path, const char *what) {
  if (path.empty())
    throw UsageError(std::string("no ") + what + " dataset given");
  return read_dataset(path);
}

json molecule_json(const Molecule &m) {
  json atoms = json::array(), bonds = json::array();
  for (std::size_t i = 0; i < m.num_atoms(); ++i) {
    atoms.push_back(index_of(m.atom_type(i)));
    for (std::size_t k = i + 1; k < m.num_atoms(); ++k)
      if (const BondType t = m.bond_type(i, k); t != BondType::kNone)
        bonds.push_back({ i, k, index_of(t) });
  }
  return { { "atoms", atoms }, { "bonds", bonds } };
}

json run_layout() {
  return { { "manifest", "manifest.json" },
           { "config", "config.json" },
           { "checkpoints", "checkpoints/epoch_{n}.bin" },
           { "metrics_csv", "metrics.csv" },
           { "metrics_jsonl", "metrics.jsonl" },
           { "samples", "samples/" } };
}

json manifest(const std::string &command, const TrainConfig &cfg, json datasets) {
  return { { "tool", "tagmol" },
           { "version", TAGMOL_VERSION },
           { "command", command },
           { "seed", cfg.seed },
           { "config_hash", hex64(config_hash(cfg)) },
           { "config", json::parse(config_to_json(cfg)) },
           { "datasets", std::move(datasets) },
           { "layout", run_layout() } };
}

fs::path prepare_run_dir(const std::string &out) {
  if (out.empty())
    throw UsageError("no output directory given (--out)");
  const fs::path dir(out);
  fs::create_directories(dir / "checkpoints");
  fs::create_directories(dir / "samples");
  return dir;
}

/* Subcommands */

struct SynthArgs {
  std::optional<std::uint64_t> seed;
  std::size_t count = 250;
  std::size_t max_atoms = kDefaultMaxAtoms;
  double test_fraction = 0.2;
  std::string out;
};

int cmd_synth(const SynthArgs &a, std::ostream &out) {
  if (a.out.empty())
    throw UsageError("no output directory given (--out)");
  if (a.test_fraction < 0 || a.test_fraction >= 1)
    throw UsageError("--test-fraction must be in [0, 1)");
  const std::uint64_t seed = resolve_seed(a.seed);
  auto all = synthesize_dataset(seed, a.count, a.max_atoms);
  const auto n_test = static_cast<std::size_t>(
      std::llround(a.test_fraction * static_cast<double>(all.size())));
  const std::vector<PairRecord> train(all.begin(), all.end() - static_cast<std::ptrdiff_t>(n_test));
  const std::vector<PairRecord> test(all.end() - static_cast<std::ptrdiff_t>(n_test), all.end());
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_dataset(dir / "train.jsonl", train);
  write_dataset(dir / "test.jsonl", test);
  out << "wrote " << train.size() << " train and " << test.size()
      << " test pairs to " << dir.string() << " (seed " << seed << ")\n";
  return kOk;
}

struct TrainArgs {
  std::string config;
  std::string resume;
};

int cmd_train(const TrainArgs &a, const std::vector<std::string> &extras,
              std::ostream &out, std::ostream &err) {
  const TrainConfig cfg = resolve_config(a.config, extras);
  const auto trainset = load_data(cfg.train_path, "training (--train)");
  const auto testset = load_data(cfg.test_path, "test (--test)");
  const fs::path dir = prepare_run_dir(cfg.out_dir);

  Checkpoint start;
  if (!a.resume.empty()) {
    start = load_checkpoint(a.resume);
    if (config_hash(start.config) != config_hash(cfg))
      throw CheckpointError(CheckpointError::Kind::kMismatch,
                            a.resume + " was written by a different config");
    start.config = cfg;
  } else {
    validate_config(cfg);
    start = initial_checkpoint(cfg);
  }

  json data { { "train", dataset_entry(cfg.train_path, trainset.size()) },
              { "test", dataset_entry(cfg.test_path, testset.size()) } };
  json man = manifest("train", cfg, std::move(data));
  if (!a.resume.empty())
    man["resumed_from"] = { { "path", a.resume }, { "epoch", start.epoch } };
  write_file(dir / "manifest.json", man.dump(2) + "\n");
  write_file(dir / "config.json", config_to_json(cfg) + "\n");

  const fs::path csv = dir / "metrics.csv", jsonl = dir / "metrics.jsonl";
  const bool fresh = a.resume.empty();
  std::ofstream csv_out(csv, fresh ? std::ios::trunc : std::ios::app);
  std::ofstream jsonl_out(jsonl, fresh ? std::ios::trunc : std::ios::app);
  if (!csv_out || !jsonl_out)
    throw std::runtime_error("cannot open metrics files in " + dir.string());
  if (fresh || fs::file_size(csv) == 0)
    csv_out << metrics_csv_header() << '\n' << std::flush;

  auto ckpt_path = [&](std::uint64_t epoch) {
    return dir / "checkpoints" / ("epoch_" + std::to_string(epoch) + ".bin");
  };
  if (fresh)
    save_checkpoint(ckpt_path(0), start);

  TrainHooks hooks;
  hooks.on_epoch = [&](const Checkpoint &ck, const MetricRecord &rec) {
    csv_out << metrics_csv_row(rec) << '\n' << std::flush;
    jsonl_out << metrics_json_line(rec) << '\n' << std::flush;
    if (!csv_out || !jsonl_out)
      throw std::runtime_error("cannot append metrics in " + dir.string());
    if (ck.epoch % cfg.checkpoint_every == 0 || ck.epoch == cfg.epochs)
      save_checkpoint(ckpt_path(ck.epoch), ck);
  };
  const TrainResult r = train(start, trainset, testset, hooks);
  const fs::path last = ckpt_path(r.final.epoch);
  if (!fs::exists(last))
    save_checkpoint(last, r.final);

  if (!r.stop_reason.empty()) {
    err << "training stopped early: " << r.stop_reason << "\n"
        << "last good checkpoint: " << last.string() << "\n";
    return kRuntimeError;
  }
  out << "trained " << r.metrics.size() << " epochs";
  if (!r.metrics.empty())
    out << ", final fd " << r.metrics.back().fd << ", energy gap "
        << r.metrics.back().energy_gap;
  out << "\nrun directory: " << dir.string() << "\n";
  return kOk;
}

struct SampleArgs {
  std::string checkpoint;
  std::string data;
  std::string id;
  std::size_t count = 5;
  std::optional<std::uint64_t> seed;
  std::string out;
};

fs::path run_dir_of(const std::string &checkpoint) {
  const fs::path p = fs::absolute(checkpoint);
  return p.parent_path().filename() == "checkpoints"
             ? p.parent_path().parent_path()
             : p.parent_path();
}

int cmd_sample(const SampleArgs &a, std::ostream &out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto data = load_data(a.data, "protein (--data)");
  auto it = data.begin();
  if (!a.id.empty())
    it = std::find_if(data.begin(), data.end(),
                      [&](const PairRecord &r) { return r.protein.id == a.id; });
  if (it == data.end())
    throw UsageError(a.id.empty() ? "empty protein file"
                                  : "no protein with id '" + a.id + "'");
  const std::uint64_t seed = resolve_seed(a.seed);
  const auto mols = generate_ligands(ck, it->protein, a.count, seed);

  fs::path path = a.out;
  if (path.empty())
    path = run_dir_of(a.checkpoint) / "samples"
           / (it->protein.id + "_seed" + std::to_string(seed) + ".jsonl");
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  std::size_t valid = 0;
  for (std::size_t i = 0; i < mols.size(); ++i) {
    const Molecule &m = mols[i];
    const bool ok = is_chemically_valid(m);
    valid += ok;
    const PropertyVector p = validate_molecule(m).ok() ? property_oracle(m)
                                                       : fallback_properties(m);
    json line { { "protein_id", it->protein.id }, { "sample", i },
                { "seed", seed } };
    line.update(molecule_json(m));
    line["valid"] = ok;
    line["properties"] = { { "valency_validity", p.valency_validity },
                           { "connectivity", p.connectivity },
                           { "heteroatom_ratio", p.heteroatom_ratio } };
    f << line.dump() << '\n';
  }
  if (!f)
    throw std::runtime_error("cannot write " + path.string());
  out << "wrote " << mols.size() << " molecules (" << valid << " valid) to "
      << path.string() << "\n";
  return kOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::size_t samples = 0; // 0: the checkpoint config's eval_samples / 1
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_eval_fd(const EvalArgs &a, std::ostream &out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto data = load_data(a.data, "test (--data)");
  TrainConfig cfg = ck.config;
  if (a.samples > 0)
    cfg.eval_samples = a.samples;
  const std::uint64_t seed = resolve_seed(a.seed);
  const EvalSnapshot s = evaluate(cfg, ck.nets, data, seed);
  const json rep { { "checkpoint", a.checkpoint },
                   { "epoch", ck.epoch },
                   { "pairs", std::min(data.size(), cfg.eval_samples) },
                   { "seed", seed },
                   { "fd", s.fd },
                   { "valid_fraction", s.valid_fraction },
                   { "energy_real", s.energy_real },
                   { "energy_fake", s.energy_fake } };
  if (!a.out.empty())
    write_file(a.out, rep.dump() + "\n");
  out << rep.dump() << "\n";
  return kOk;
}

int cmd_eval_energy(const EvalArgs &a, std::ostream &out) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const auto data = load_data(a.data, "evaluation (--data)");
  const std::uint64_t seed = resolve_seed(a.seed);
  const EnergyReport rep = binding_energy_report(
      ck, data, a.samples > 0 ? a.samples : 1, seed);
  std::ostringstream csv;
  char buf[160];
  csv << "id,energy_real,energy_fake,gap,mse\n";
  for (const EnergyRow &r: rep.rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g", r.energy_real,
                  r.energy_fake, r.gap, r.mse);
    csv << r.id << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g", rep.mean_real,
                rep.mean_fake, rep.mean_gap, rep.mean_mse);
  csv << "mean," << buf << '\n';
  if (!a.out.empty())
    write_file(a.out, csv.str());
  else
    out << csv.str();
  out << "mean energy gap " << rep.mean_gap << " over " << rep.rows.size()
      << " pairs\n";
  return kOk;
}

struct AblateArgs {
  std::string config;
  std::vector<std::size_t> xdims = kDefaultAblationDims;
};

int cmd_ablate(const AblateArgs &a, const std::vector<std::string> &extras,
               std::ostream &out) {
  const TrainConfig cfg = resolve_config(a.config, extras);
  if (a.xdims.empty())
    throw UsageError("--xdims is empty");
  const auto trainset = load_data(cfg.train_path, "training (--train)");
  const auto testset = load_data(cfg.test_path, "test (--test)");
  const fs::path dir = prepare_run_dir(cfg.out_dir);
  const std::size_t epochs = cfg.epochs;

  json data { { "train", dataset_entry(cfg.train_path, trainset.size()) },
              { "test", dataset_entry(cfg.test_path, testset.size()) } };
  json man = manifest("ablate", cfg, std::move(data));
  man["xdims"] = a.xdims;
  man["epochs"] = epochs;
  man["layout"] = { { "manifest", "manifest.json" },
                    { "config", "config.json" },
                    { "ablation_csv", "ablation.csv" },
                    { "ablation_jsonl", "ablation.jsonl" } };
  write_file(dir / "manifest.json", man.dump(2) + "\n");
  write_file(dir / "config.json", config_to_json(cfg) + "\n");

  const auto runs = xdim_ablation(cfg, a.xdims, epochs, cfg.seed, trainset, testset);
  std::ofstream csv(dir / "ablation.csv", std::ios::trunc);
  std::ofstream jsonl(dir / "ablation.jsonl", std::ios::trunc);
  csv << "xdim," << metrics_csv_header() << '\n';
  std::size_t failed = 0;
  for (const auto &[xdim, run]: runs) {
    for (const MetricRecord &r: run.metrics)
      csv << xdim << ',' << metrics_csv_row(r) << '\n';
    json line { { "xdim", xdim } };
    json fd = json::array();
    for (const MetricRecord &r: run.metrics)
      fd.push_back(r.fd);
    line["fd"] = fd;
    line["final_fd"] = run.metrics.empty() ? json(nullptr) : json(run.metrics.back().fd);
    line["stop_reason"] = run.stop_reason;
    line["error"] = run.error;
    jsonl << line.dump() << '\n';
    out << "xdim " << xdim << ": ";
    if (!run.error.empty()) {
      ++failed;
      out << "failed: " << run.error << "\n";
    } else {
      out << run.metrics.size() << " epochs, final fd "
          << (run.metrics.empty() ? 0.0 : run.metrics.back().fd)
          << (run.stop_reason.empty() ? "" : " (stopped: " + run.stop_reason + ")")
          << "\n";
    }
  }
  if (!csv || !jsonl)
    throw std::runtime_error("cannot write ablation tables in " + dir.string());
  return failed == runs.size() ? kRuntimeError : kOk;
}

void add_seed(CLI::App *sub, std::optional<std::uint64_t> &seed) {
  sub->add_option("--seed", seed, "Seed (default: $TAGMOL_SEED, else 0)");
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out,
        std::ostream &err) {
  CLI::App app { "Target-conditioned molecular graph generation" };
  app.name("tagmol");
  app.require_subcommand(1);
  app.set_version_flag("--version", TAGMOL_VERSION);

  SynthArgs synth;
  auto *s = app.add_subcommand("synth-data", "Write a synthetic train/test split");
  add_seed(s, synth.seed);
  s->add_option("--count", synth.count, "Number of pairs")->check(CLI::PositiveNumber);
  s->add_option("--max-atoms", synth.max_atoms, "Atom slots per ligand")
      ->check(CLI::PositiveNumber);
  s->add_option("--test-fraction", synth.test_fraction, "Fraction held out");
  s->add_option("--out", synth.out, "Output directory")->required();

  TrainArgs targs;
  auto *t = app.add_subcommand(
      "train", "Train a model; any config field is accepted as --field value");
  t->add_option("--config", targs.config, "JSON config file");
  t->add_option("--resume", targs.resume, "Continue from a checkpoint");
  t->allow_extras();

  SampleArgs sargs;
  auto *sm = app.add_subcommand("sample", "Generate ligands for one protein");
  sm->add_option("--checkpoint", sargs.checkpoint)->required();
  sm->add_option("--data", sargs.data, "JSONL pair records holding the protein")
      ->required();
  sm->add_option("--id", sargs.id, "Protein id (default: first record)");
  sm->add_option("--count", sargs.count)->check(CLI::PositiveNumber);
  add_seed(sm, sargs.seed);
  sm->add_option("--out", sargs.out, "Output JSONL (default: run samples/)");

  EvalArgs fargs;
  auto *fd = app.add_subcommand("eval-fd", "Frechet distance on a test set");
  fd->add_option("--checkpoint", fargs.checkpoint)->required();
  fd->add_option("--data", fargs.data)->required();
  fd->add_option("--samples", fargs.samples, "Pairs used (default: config)");
  add_seed(fd, fargs.seed);
  fd->add_option("--out", fargs.out, "Write the JSON report here too");

  EvalArgs eargs;
  auto *en = app.add_subcommand("eval-energy", "Per-pair binding-energy table");
  en->add_option("--checkpoint", eargs.checkpoint)->required();
  en->add_option("--data", eargs.data)->required();
  en->add_option("--samples", eargs.samples, "Generated ligands per pair")
      ->check(CLI::PositiveNumber);
  add_seed(en, eargs.seed);
  en->add_option("--out", eargs.out, "CSV output (default: stdout)");

  AblateArgs aargs;
  auto *ab = app.add_subcommand(
      "ablate", "One training run per embedding size; config fields as in train");
  ab->add_option("--config", aargs.config, "JSON config file");
  ab->add_option("--xdims", aargs.xdims, "Embedding sizes")->delimiter(',');
  ab->allow_extras();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError &e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (s->parsed())
      return cmd_synth(synth, out);
    if (t->parsed())
      return cmd_train(targs, t->remaining(), out, err);
    if (sm->parsed())
      return cmd_sample(sargs, out);
    if (fd->parsed())
      return cmd_eval_fd(fargs, out);
    if (en->parsed())
      return cmd_eval_energy(eargs, out);
    if (ab->parsed())
      return cmd_ablate(aargs, ab->remaining(), out);
  } catch (const CheckpointError &e) {
    err << "checkpoint error: " << e.what() << "\n";
    return e.kind() == CheckpointError::Kind::kIo ? kRuntimeError
                                                   : kCheckpointError;
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const UsageError &e) {
    err << "usage error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ParseError &e) {
    err << "dataset error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ContractViolation &e) {
    err << "invalid input: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}

} // namespace tagmol::cli
