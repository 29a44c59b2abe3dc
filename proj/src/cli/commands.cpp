// Copyright 2026 The sfadapt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sfadapt/cli/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "sfadapt/cli/plot.hpp"
#include "sfadapt/errors.hpp"
#include "sfadapt/instances/instances.hpp"
#include "sfadapt/model/snapshot.hpp"
#include "sfadapt/model/unet.hpp"
#include "sfadapt/stopping/stopping.hpp"
#include "sfadapt/synthdata/pretrain.hpp"
#include "sfadapt/synthdata/synthdata.hpp"
#include "sfadapt/train/adapt.hpp"
#include "sfadapt/train/evaluate.hpp"

namespace sfadapt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

fs::path require_path(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  return j.at(key).get<std::string>();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw DataError("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// A dataset directory as written by gen-data (images/, masks/), or a plain
// folder of images.
synthdata::Dataset open_dataset(const fs::path& dir, bool with_masks) {
  if (fs::is_directory(dir / "images")) return synthdata::load_dataset(dir, with_masks);
  return synthdata::ingest(dir);
}

synthdata::Dataset open_labeled(const fs::path& dir) {
  auto d = open_dataset(dir, true);
  if (d.empty()) throw DataError("no images in " + dir.string());
  if (!d.labeled()) throw DataError("dataset has no masks: " + dir.string());
  return d;
}

model::UNet<float> load_model(const fs::path& path) {
  return model::unet_from_snapshot<float>(model::load_checkpoint(path));
}

uint64_t name_hash(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
  return h;
}

std::string ap_csv(const synthdata::Dataset& data, const std::vector<instances::InstanceLabeling>& pred,
                   const instances::ApReport& rep) {
  std::ostringstream os;
  os << "name,n_true,n_pred,tp,fp,fn,ap\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = rep.per_image[i];
    os << data.samples[i].name << ',' << data.samples[i].instances.count() << ',' << pred[i].count()
       << ',' << r.tp << ',' << r.fp << ',' << r.fn << ',' << num(rep.per_image_ap[i]) << '\n';
  }
  os << "ALL,,," << rep.tp << ',' << rep.fp << ',' << rep.fn << ',' << num(rep.mean_ap) << '\n';
  return os.str();
}

double pooled_ap(const instances::ApReport& rep) {
  const long d = rep.tp + rep.fp + rep.fn;
  return d == 0 ? 1.0 : static_cast<double>(rep.tp) / d;
}

json ap_summary(const instances::ApReport& rep) {
  return {{"mean_ap", rep.mean_ap}, {"pooled_ap", pooled_ap(rep)}, {"tp", rep.tp},
          {"fp", rep.fp},           {"fn", rep.fn},               {"count", rep.per_image.size()}};
}

json record_json(const stopping::StoppingRecord& r) {
  json j = {{"iteration", r.iteration},
            {"fn_rate", r.fn_rate},
            {"d_emb", r.d_emb},
            {"mean_confidence", r.mean_confidence},
            {"tta_variance", r.tta_variance},
            {"fn_exceeded", r.fn_exceeded},
            {"emb_exceeded", r.emb_exceeded},
            {"fired", stopping::to_string(r.fired)}};
  if (r.oracle_ap) j["oracle_ap"] = *r.oracle_ap;
  return j;
}

// Post-hoc selection summary of a record series: per criterion the selected
// checkpoint, and the oracle maximum when oracle AP is present.
json selection_summary(const std::vector<stopping::StoppingRecord>& recs,
                       const stopping::StoppingConfig& cfg) {
  json out = json::object();
  const bool oracle = !recs.empty() && std::all_of(recs.begin(), recs.end(),
                                                   [](const auto& r) { return r.oracle_ap.has_value(); });
  for (auto [name, crit, tau] : {std::tuple{"fn", stopping::Criterion::kFn, cfg.tau_fn},
                                 std::tuple{"emb", stopping::Criterion::kEmb, cfg.tau_emb}}) {
    const std::size_t idx = stopping::stop_index(recs, crit, tau);
    json c = {{"tau", tau}, {"stop_iteration", recs[idx].iteration},
              {"fired", idx + 1 < recs.size()}};
    if (oracle) {
      c["oracle_ap"] = *recs[idx].oracle_ap;
      c["capture_fraction"] = stopping::capture_for(recs, crit, tau);
    }
    out[name] = c;
  }
  if (oracle) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < recs.size(); ++i) {
      if (*recs[i].oracle_ap > *recs[best].oracle_ap) best = i;
    }
    out["test_max"] = {{"iteration", recs[best].iteration}, {"oracle_ap", *recs[best].oracle_ap},
                       {"capture_fraction", 1.0}};
    out["initial_ap"] = *recs.front().oracle_ap;
    out["final_ap"] = *recs.back().oracle_ap;
  }
  return out;
}

}  // namespace

void init_logging() {
  const char* env = std::getenv("SFADAPT_LOG_LEVEL");
  spdlog::set_pattern("[%l] %v");
  if (!env) {
    spdlog::set_level(spdlog::level::info);
    return;
  }
  const auto level = spdlog::level::from_str(env);
  if (level == spdlog::level::off && std::string(env) != "off") {
    spdlog::set_level(spdlog::level::info);
    spdlog::warn("unknown SFADAPT_LOG_LEVEL '{}', using info", env);
    return;
  }
  spdlog::set_level(level);
}

json load_config(const CommonOptions& opts) {
  json cfg = json::object();
  if (opts.config) {
    std::ifstream is(*opts.config);
    if (!is) throw ConfigError("cannot read config " + opts.config->string());
    try {
      cfg = json::parse(is);
    } catch (const json::parse_error& e) {
      throw ConfigError("config " + opts.config->string() + ": " + e.what());
    }
    if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
  }
  if (opts.seed) cfg["seed"] = *opts.seed;
  if (opts.out) cfg["out"] = opts.out->string();
  if (opts.data) cfg["data"] = opts.data->string();
  if (opts.checkpoint) cfg["checkpoint"] = opts.checkpoint->string();
  return cfg;
}

void cmd_gen_data(const json& cfg) {
  check_keys(cfg, {"out", "seed", "domain", "splits", "spot_check"}, "gen-data");
  const fs::path out = require_path(cfg, "out", "gen-data");
  const uint64_t seed = get_or<uint64_t>(cfg, "seed", 0);
  const auto spec = get_or<synthdata::DomainSpec>(cfg, "domain", {});
  spec.validate();
  std::map<std::string, int> splits{{"test", 64}, {"train", 256}, {"validation", 32}};
  if (cfg.contains("splits")) splits = cfg.at("splits").get<std::map<std::string, int>>();
  const int spot = get_or<int>(cfg, "spot_check", 5);

  json resolved = {{"out", out.string()}, {"seed", seed}, {"domain", spec}, {"splits", splits},
                   {"spot_check", spot}};
  write_json(out / "resolved_config.json", resolved);

  for (const auto& [name, count] : splits) {
    const uint64_t split_seed = synthdata::derive_seed(seed, name_hash(name));
    spdlog::info("gen-data: {} ({} samples, seed {})", name, count, split_seed);
    const auto data = synthdata::generate(spec, count, split_seed);
    synthdata::export_dataset(data, out / name,
                              {{"split", name}, {"spec", spec}, {"seed", split_seed},
                               {"generator", kVersion}});
    // Re-read what was written and check that its targets decode exactly.
    const auto back = synthdata::load_dataset(out / name);
    const int n = std::min<int>(spot, static_cast<int>(back.size()));
    for (int i = 0; i < n; ++i) {
      const auto& s = back.samples[i];
      Tensor<float> prob(1, 2, s.image.h(), s.image.w());
      for (std::size_t k = 0; k < s.class_target.size(); ++k) {
        prob.plane(0, 1)[k] = s.class_target.data()[k];
        prob.plane(0, 0)[k] = 1.0f - s.class_target.data()[k];
      }
      const auto dec = instances::decode_item(prob, s.flow_target, 0);
      if (instances::average_precision(dec, s.instances) != 1.0) {
        throw DataError("gen-data: decode spot check failed on " + s.name);
      }
    }
  }
}

void cmd_pretrain(const json& cfg) {
  check_keys(cfg, {"data", "eval_data", "target_data", "out", "seed", "model", "pretrain", "decode"},
             "pretrain");
  const fs::path out = require_path(cfg, "out", "pretrain");
  const fs::path data_dir = require_path(cfg, "data", "pretrain");
  auto pcfg = get_or<synthdata::PretrainConfig>(cfg, "pretrain", {});
  const uint64_t seed = get_or<uint64_t>(cfg, "seed", pcfg.seed);
  pcfg.seed = seed;
  model::UNetConfig mcfg;
  if (cfg.contains("model")) {
    check_keys(cfg.at("model"), {"base_width"}, "pretrain.model");
    mcfg.base_width = get_or<int>(cfg.at("model"), "base_width", mcfg.base_width);
  }
  const auto decode = get_or<instances::DecodeConfig>(cfg, "decode", {});

  json resolved = cfg;
  resolved["seed"] = seed;
  resolved["pretrain"] = pcfg;
  resolved["model"] = {{"base_width", mcfg.base_width}};
  resolved["decode"] = decode;
  write_json(out / "resolved_config.json", resolved);

  const auto train = open_labeled(data_dir);
  model::UNet<float> net(mcfg, seed);
  json losses = json::array();
  const auto snap = synthdata::pretrain_source(net, train, pcfg, [&](const synthdata::PretrainProgress& p) {
    spdlog::info("pretrain: epoch {} loss {:.5f}", p.epoch, p.mean_loss);
    losses.push_back(p.mean_loss);
  });
  model::save_checkpoint(snap, out / "theta0.ckpt");

  json summary = {{"epochs", pcfg.epochs}, {"epoch_loss", losses}, {"gate_ap", pcfg.gate_ap},
                  {"architecture", net.architecture_id()}};
  std::optional<double> source_ap;
  if (cfg.contains("eval_data")) {
    const auto held = open_labeled(cfg.at("eval_data").get<std::string>());
    const auto pred = train::predict_instances(net, held.images(), decode);
    const auto rep = instances::average_precision(pred, held.labelings());
    write_file(out / "source_ap.csv", ap_csv(held, pred, rep));
    summary["source"] = ap_summary(rep);
    source_ap = rep.mean_ap;
    spdlog::info("pretrain: source AP@0.5 {:.4f}", rep.mean_ap);
  }
  if (cfg.contains("target_data")) {
    const auto target = open_labeled(cfg.at("target_data").get<std::string>());
    const auto pred = train::predict_instances(net, target.images(), decode);
    const auto rep = instances::average_precision(pred, target.labelings());
    write_file(out / "target_ap.csv", ap_csv(target, pred, rep));
    summary["target"] = ap_summary(rep);
    if (source_ap) summary["domain_gap"] = *source_ap - rep.mean_ap;
    spdlog::info("pretrain: target AP@0.5 {:.4f}", rep.mean_ap);
  }
  const bool gate_ok = !source_ap || *source_ap >= pcfg.gate_ap;
  summary["gate_passed"] = gate_ok;
  write_json(out / "summary.json", summary);
  if (!gate_ok) {
    throw GateFailure("pretrain: source AP " + num(*source_ap) + " is below the gate " +
                      num(pcfg.gate_ap) + "; see " + (out / "source_ap.csv").string());
  }
}

void cmd_adapt(const json& cfg) {
  check_keys(cfg, {"checkpoint", "data", "validation", "validation_fraction", "test", "out", "seed",
                   "adapt", "save_checkpoints"},
             "adapt");
  const fs::path out = require_path(cfg, "out", "adapt");
  const fs::path ckpt = require_path(cfg, "checkpoint", "adapt");
  const fs::path data_dir = require_path(cfg, "data", "adapt");
  auto acfg = get_or<train::AdaptConfig>(cfg, "adapt", {});
  acfg.seed = get_or<uint64_t>(cfg, "seed", acfg.seed);
  acfg.validate();
  const double val_fraction = get_or<double>(cfg, "validation_fraction", 0.1);
  const bool save_ckpts = get_or<bool>(cfg, "save_checkpoints", true);
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("adapt: validation_fraction must be in (0, 1)");
  }

  json resolved = cfg;
  resolved["seed"] = acfg.seed;
  resolved["adapt"] = acfg;
  resolved["validation_fraction"] = val_fraction;
  resolved["save_checkpoints"] = save_ckpts;
  write_json(out / "resolved_config.json", resolved);
  write_json(out / "manifest.json", {{"version", kVersion}, {"seed", acfg.seed}, {"config", resolved}});

  const auto init = model::load_checkpoint(ckpt);
  // Target images only: masks are never read for training or stopping.
  auto target = open_dataset(data_dir, false);
  if (target.empty()) throw DataError("adapt: no target images in " + data_dir.string());
  train::AdaptData data;
  if (cfg.contains("validation")) {
    const auto val = open_dataset(cfg.at("validation").get<std::string>(), false);
    if (val.empty()) throw DataError("adapt: empty validation set");
    data.train_images = target.images();
    data.validation_images = val.images();
  } else {
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(val_fraction * target.size()));
    if (n_val >= target.size()) throw DataError("adapt: too few target images to hold out validation");
    data.train_images = target.subset(0, target.size() - n_val).images();
    data.validation_images = target.subset(target.size() - n_val, n_val).images();
  }
  if (cfg.contains("test")) {
    const auto test = open_labeled(cfg.at("test").get<std::string>());
    data.test_images = test.images();
    data.test_truth = test.labelings();
  }

  train::Adapter adapter(acfg, init, std::move(data));
  std::vector<train::StepLog> steps;
  const auto on_eval = [&](const stopping::StoppingRecord& r, const model::UNet<float>& net) {
    spdlog::info("adapt: iter {} fn_rate {:.4f} d_emb {:.4f}{}", r.iteration, r.fn_rate, r.d_emb,
                 r.oracle_ap ? fmt::format(" oracle AP {:.4f}", *r.oracle_ap) : std::string());
    if (save_ckpts) {
      char name[40];
      std::snprintf(name, sizeof name, "iter_%07lld.ckpt", static_cast<long long>(r.iteration));
      fs::create_directories(out / "checkpoints");
      model::save_checkpoint(net.snapshot(r.iteration), out / "checkpoints" / name);
    }
  };
  const auto on_step = [&](const train::StepLog& s) {
    steps.push_back(s);
    spdlog::debug("adapt: step {} loss {:.5f}", s.iteration, s.loss.total);
  };
  train::AdaptResult res;
  try {
    res = adapter.run(on_eval, on_step);
  } catch (const NumericError& e) {
    json dump = {{"error", e.what()}, {"iteration", adapter.iteration()}};
    json tail = json::array();
    for (std::size_t i = steps.size() > 10 ? steps.size() - 10 : 0; i < steps.size(); ++i) {
      const auto& l = steps[i].loss;
      tail.push_back({{"iteration", steps[i].iteration}, {"lr", steps[i].lr}, {"ce", l.ce_term},
                      {"mse", l.mse_term}, {"l2sp", l.l2sp_term}, {"total", l.total}});
    }
    dump["last_steps"] = tail;
    dump["thresholds"] = {{"q_cls", adapter.thresholds().q_cls}, {"q_flow", adapter.thresholds().q_flow}};
    write_json(out / "failure.json", dump);
    train::write_metrics_csv(out / "metrics.csv", steps, {});
    throw;
  }

  train::write_metrics_csv(out / "metrics.csv", res.steps, res.history);
  model::save_checkpoint(res.final_student, out / "final_student.ckpt");
  model::save_checkpoint(res.final_teacher, out / "final_teacher.ckpt");
  model::save_checkpoint(res.stopped, out / "stopped.ckpt");
  json report = {{"halted", res.halted},
                 {"stopped_iteration", res.stopped_iteration},
                 {"iterations_run", adapter.iteration()},
                 {"eval_model", acfg.eval_model == train::EvalModel::kStudent ? "student" : "teacher"},
                 {"records", json::array()}};
  for (const auto& r : res.history) report["records"].push_back(record_json(r));
  if (!res.history.empty()) report["selection"] = selection_summary(res.history, acfg.stopping);
  write_json(out / "stopping_report.json", report);
}

void cmd_evaluate(const json& cfg) {
  check_keys(cfg, {"checkpoint", "data", "out", "seed", "decode", "iou_threshold"}, "evaluate");
  const fs::path out = require_path(cfg, "out", "evaluate");
  const auto decode = get_or<instances::DecodeConfig>(cfg, "decode", {});
  const double iou = get_or<double>(cfg, "iou_threshold", 0.5);
  if (!(iou > 0.0 && iou <= 1.0)) throw ConfigError("evaluate: iou_threshold must be in (0, 1]");
  json resolved = cfg;
  resolved["decode"] = decode;
  resolved["iou_threshold"] = iou;
  write_json(out / "resolved_config.json", resolved);

  const auto data = open_labeled(require_path(cfg, "data", "evaluate"));
  const auto net = load_model(require_path(cfg, "checkpoint", "evaluate"));
  const auto pred = train::predict_instances(net, data.images(), decode);
  const auto rep = instances::average_precision(pred, data.labelings(), iou);
  write_file(out / "ap.csv", ap_csv(data, pred, rep));
  auto summary = ap_summary(rep);
  summary["iou_threshold"] = iou;
  write_json(out / "summary.json", summary);
  spdlog::info("evaluate: mean AP {:.4f} over {} images", rep.mean_ap, data.size());
}

void cmd_analyze_stopping(const json& cfg) {
  check_keys(cfg, {"checkpoints", "checkpoint", "initial", "data", "labels", "stopping", "decode", "out",
                   "seed"},
             "analyze-stopping");
  const fs::path out = require_path(cfg, "out", "analyze-stopping");
  fs::path series_dir;
  if (cfg.contains("checkpoints")) series_dir = cfg.at("checkpoints").get<std::string>();
  else series_dir = require_path(cfg, "checkpoint", "analyze-stopping");
  const auto scfg = get_or<stopping::StoppingConfig>(cfg, "stopping", {});
  const auto decode = get_or<instances::DecodeConfig>(cfg, "decode", {});
  json resolved = cfg;
  resolved["stopping"] = scfg;
  resolved["decode"] = decode;
  write_json(out / "resolved_config.json", resolved);

  if (!fs::is_directory(series_dir)) throw DataError("analyze-stopping: no checkpoint directory " + series_dir.string());
  std::vector<std::pair<model::ParamSnapshot, std::string>> series;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(series_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ckpt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) series.emplace_back(model::load_checkpoint(f), f.filename().string());
  if (series.empty()) throw DataError("analyze-stopping: no checkpoints in " + series_dir.string());
  std::stable_sort(series.begin(), series.end(),
                   [](const auto& a, const auto& b) { return a.first.iteration < b.first.iteration; });

  const auto initial = model::unet_from_snapshot<float>(
      cfg.contains("initial") ? model::load_checkpoint(cfg.at("initial").get<std::string>())
                              : series.front().first);
  const auto val = open_dataset(require_path(cfg, "data", "analyze-stopping"), false);
  if (val.empty()) throw DataError("analyze-stopping: empty validation set");
  std::optional<synthdata::Dataset> labels;
  if (cfg.contains("labels")) labels = open_labeled(cfg.at("labels").get<std::string>());

  stopping::StoppingEvaluator ev(initial, val.images(), scfg, decode);
  std::vector<stopping::StoppingRecord> recs;
  std::ostringstream csv;
  csv << "iteration,checkpoint,fn_rate,d_emb,mean_confidence,tta_variance,oracle_ap,fn_exceeded,emb_exceeded\n";
  for (const auto& [snap, name] : series) {
    const auto net = model::unet_from_snapshot<float>(snap);
    auto r = ev.evaluate(net, snap.iteration);
    if (labels) {
      const auto pred = train::predict_instances(net, labels->images(), decode);
      r.oracle_ap = instances::average_precision(pred, labels->labelings()).mean_ap;
    }
    csv << r.iteration << ',' << name << ',' << num(r.fn_rate) << ',' << num(r.d_emb) << ','
        << num(r.mean_confidence) << ',' << num(r.tta_variance) << ','
        << (r.oracle_ap ? num(*r.oracle_ap) : "") << ',' << int(r.fn_exceeded) << ','
        << int(r.emb_exceeded) << '\n';
    recs.push_back(r);
  }
  write_file(out / "stopping_analysis.csv", csv.str());

  json summary = {{"checkpoints", recs.size()}, {"selection", selection_summary(recs, scfg)},
                  {"plot_series", {{"fn_rate", "red"}, {"d_emb", "blue"}, {"oracle_ap", "green"}}},
                  {"plot_markers", "selected checkpoints of the fn and emb criteria"}};
  write_json(out / "summary.json", summary);

  std::vector<double> x, fn, emb, ap;
  for (const auto& r : recs) {
    x.push_back(static_cast<double>(r.iteration));
    fn.push_back(r.fn_rate);
    emb.push_back(r.d_emb);
    ap.push_back(r.oracle_ap ? *r.oracle_ap : std::nan(""));
  }
  std::vector<Series> lines{{"fn_rate", fn, 200, 30, 30}, {"d_emb", emb, 30, 60, 200}};
  if (labels) lines.push_back({"oracle_ap", ap, 30, 150, 30});
  std::vector<double> markers{
      x[stopping::stop_index(recs, stopping::Criterion::kFn, scfg.tau_fn)],
      x[stopping::stop_index(recs, stopping::Criterion::kEmb, scfg.tau_emb)]};
  write_line_plot(out / "stopping_plot.png", x, lines, markers);
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"gen-data", "pretrain", "adapt", "evaluate",
                                              "analyze-stopping"};
  return names;
}

int run(const std::string& command, const CommonOptions& opts) {
  try {
    const json cfg = load_config(opts);
    if (command == "gen-data") cmd_gen_data(cfg);
    else if (command == "pretrain") cmd_pretrain(cfg);
    else if (command == "adapt") cmd_adapt(cfg);
    else if (command == "evaluate") cmd_evaluate(cfg);
    else if (command == "analyze-stopping") cmd_analyze_stopping(cfg);
    else throw ConfigError("unknown command '" + command + "'");
    return kOk;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfigError;
  } catch (const json::exception& e) {
    spdlog::error("config error: {}", e.what());
    return kConfigError;
  } catch (const NumericError& e) {
    spdlog::error("numeric error: {}", e.what());
    return kNumericError;
  } catch (const GateFailure& e) {
    spdlog::error("gate failure: {}", e.what());
    return kGateFailure;
  } catch (const DataError& e) {
    spdlog::error("data error: {}", e.what());
    return kDataError;
  } catch (const ShapeError& e) {
    spdlog::error("data error: {}", e.what());
    return kDataError;
  } catch (const ArchitectureMismatch& e) {
    spdlog::error("data error: {}", e.what());
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("data error: {}", e.what());
    return kDataError;
  } catch (const std::exception& e) {
    spdlog::error("error: {}", e.what());
    return kUnexpected;
  }
}

}  // namespace sfadapt::cli
