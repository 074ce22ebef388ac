// octopus: data generation, evaluation, analysis and head training.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "octopus/checkpoint.hpp"
#include "octopus/dpo.hpp"
#include "octopus/errors.hpp"
#include "octopus/experiments.hpp"
#include "octopus/io.hpp"
#include "octopus/preference.hpp"

using namespace octopus;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIntegrity = 2;
constexpr int kExitThreshold = 3;

struct Env {
  ModelConfig model;
  CdConfig cd;
  SimLvlm sim{model};
  std::string fingerprint = model_fingerprint(model, cd);
};

std::string csv_path_for(const std::string& report) {
  std::filesystem::path p(report);
  p.replace_extension(".csv");
  return p.string();
}

Json report_base(const std::string& experiment, const Env& env) {
  return Json{{"experiment", experiment},
              {"model_fingerprint", env.fingerprint},
              {"model_config", model_config_json(env.model, env.cd)}};
}

void write_report(const std::string& path, const Json& report, const std::string& csv) {
  write_file_atomic(path, report.dump(2) + "\n");
  if (!csv.empty()) write_file_atomic(csv_path_for(path), csv);
}

struct LoadedData {
  Dataset dataset;
  std::string fingerprint;
};

LoadedData load_data(const std::string& path) {
  const std::string text = read_file(path);
  return {dataset_from_jsonl(text), content_fingerprint(text)};
}

CauseMix parse_cause_mix(const std::string& text) {
  CauseMix mix{};
  std::stringstream ss(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= mix.size()) throw std::invalid_argument("--cause-mix takes four numbers");
    mix[i++] = std::stod(item);
  }
  if (i != mix.size()) throw std::invalid_argument("--cause-mix takes four numbers");
  validate_cause_mix(mix);
  return mix;
}

// ---- gen-data ----------------------------------------------------------

struct GenDataOpts {
  std::uint64_t seed = 0;
  std::size_t n_describe = 0;
  std::size_t n_exists = 0;
  std::string out;
  std::string cause_mix = "0.3,0.3,0.3,0.1";
  std::uint64_t prior_seed = 7;
};

int run_gen_data(const GenDataOpts& o) {
  DatasetConfig cfg;
  cfg.n_describe = o.n_describe;
  cfg.n_exists = o.n_exists;
  cfg.cause_mix = parse_cause_mix(o.cause_mix);
  cfg.prior_seed = o.prior_seed;
  write_file_atomic(o.out, dataset_to_jsonl(gen_dataset(cfg, o.seed)));
  return kExitOk;
}

// ---- eval --------------------------------------------------------------

struct EvalOpts {
  std::string data;
  std::string policy = "base";
  std::string task = "gen";
  std::string report;
  std::uint64_t seed = 0;
};

int run_eval(const EvalOpts& o, const Env& env) {
  const LoadedData data = load_data(o.data);
  std::optional<Checkpoint> ck;
  Policy policy;
  if (o.policy == "base") {
    policy = Policy::base();
  } else if (o.policy == "random") {
    policy = Policy::random(o.seed);
  } else if (o.policy.rfind("fixed:", 0) == 0) {
    const Action a = action_from_name(o.policy.substr(6));
    if (a == Action::kNull) throw std::invalid_argument("fixed policy needs s1, s2 or s3");
    policy = Policy::fixed_action(a);
  } else if (o.policy.rfind("octopus:", 0) == 0) {
    ck.emplace(load_checkpoint(o.policy.substr(8)));
    check_fingerprint(env.fingerprint, ck->model_fingerprint, "checkpoint model");
    policy = Policy::octopus(ck->params);
  } else {
    throw std::invalid_argument("unknown policy '" + o.policy + "'");
  }

  Json report = report_base("eval", env);
  report["policy"] = o.policy;
  report["task"] = o.task;
  report["dataset"] = o.data;
  report["dataset_fingerprint"] = data.fingerprint;
  report["seed"] = o.seed;
  if (ck) report["head_config"] = head_config_json(ck->params.config());
  std::string csv;
  if (o.task == "gen") {
    const GenEval ev = eval_generative(env.sim, data.dataset, policy, env.cd);
    report["metrics"] = gen_metrics_json(ev.metrics);
    report["action_counts"] = action_counts_json(ev.action_counts);
    report["notes"] = "cog counts hallucinations inside the scene's co-occurrence prior set";
    csv = gen_csv(o.policy, ev.metrics);
  } else if (o.task == "disc") {
    const DiscEval ev = eval_discriminative(env.sim, data.dataset, policy, env.cd);
    report["metrics"] = disc_metrics_json(ev.metrics);
    report["action_counts"] = action_counts_json(ev.action_counts);
    csv = disc_csv(o.policy, ev.metrics);
  } else {
    throw std::invalid_argument("--task must be gen or disc");
  }
  write_report(o.report, report, csv);
  std::cout << csv;
  return kExitOk;
}

// ---- analyses ----------------------------------------------------------

int run_overlap(const std::string& data_path, const std::string& report_path, const Env& env) {
  const LoadedData data = load_data(data_path);
  const OverlapReport rep = analyze_overlap(env.sim, data.dataset, env.cd);
  Json report = report_base("analyze-overlap", env);
  report["dataset"] = data_path;
  report["dataset_fingerprint"] = data.fingerprint;
  report["result"] = overlap_json(rep);
  write_report(report_path, report, overlap_csv(rep));
  std::cout << overlap_csv(rep);
  return kExitOk;
}

int run_enumerate(const std::string& data_path, std::size_t prefix_len,
                  const std::string& report_path, const Env& env) {
  const LoadedData data = load_data(data_path);
  const EnumerateReport rep = analyze_enumerate(env.sim, data.dataset, env.cd, prefix_len);
  Json report = report_base("analyze-enumerate", env);
  report["dataset"] = data_path;
  report["dataset_fingerprint"] = data.fingerprint;
  report["result"] = enumerate_json(rep);
  write_report(report_path, report, enumerate_csv(rep));
  std::cout << enumerate_csv(rep);
  return kExitOk;
}

// ---- rollout / build-prefs ---------------------------------------------

struct RolloutOpts {
  std::string data;
  std::string out;
  std::size_t count = kDefaultRollouts;
  std::uint64_t seed = 0;
};

int run_rollout(const RolloutOpts& o, const Env& env) {
  if (o.count < 2) throw std::invalid_argument("--count must be at least 2");
  const LoadedData data = load_data(o.data);
  RolloutFile file;
  file.header = {"octopus-rollouts", 1, o.data, data.fingerprint, env.fingerprint, o.seed,
                 "", "gen", o.count};
  const auto rollouts =
      dataset_rollouts(env.sim, data.dataset, o.count, o.seed, Criterion::kChair, env.cd);
  std::map<std::uint64_t, const Sample*> by_id;
  for (const Sample& s : data.dataset) by_id[s.sample_id] = &s;
  std::map<std::uint64_t, std::size_t> next_index;
  for (const Rollout& r : rollouts) {
    const ResponseScore sc =
        score_response(r.result.response, by_id.at(r.sample_id)->scene, env.sim.prior());
    file.records.push_back(
        {r.sample_id, next_index[r.sample_id]++, {r.workflow, r.result.response}, sc.chair, sc.cover});
  }
  write_file_atomic(o.out, rollouts_to_jsonl(file));
  return kExitOk;
}

struct BuildPrefsOpts {
  std::string rollouts;
  std::string data;
  std::string criterion = "chair";
  std::string task = "gen";
  std::string out;
  std::size_t max_pairs = 0;
};

int run_build_prefs(const BuildPrefsOpts& o, const Env& env) {
  PrefFile file;
  if (o.task == "gen") {
    if (o.rollouts.empty()) throw std::invalid_argument("--task gen needs --rollouts");
    const RolloutFile rf = rollouts_from_jsonl(read_file(o.rollouts));
    check_fingerprint(env.fingerprint, rf.header.model_fingerprint, "rollout model");
    const Criterion crit = criterion_from_name(o.criterion);
    std::vector<Rollout> rollouts;
    for (const RolloutRecord& rec : rf.records) {
      Rollout r;
      r.sample_id = rec.sample_id;
      r.workflow = rec.side.actions;
      r.result.actions = rec.side.actions;
      r.result.response = rec.side.tokens;
      r.criterion = crit;
      ResponseScore sc;
      sc.chair = rec.chair;
      sc.cover = rec.cover;
      r.score = criterion_value(sc, crit);
      rollouts.push_back(std::move(r));
    }
    file.pairs = build_pairs_generative(rollouts, crit);
    file.header = rf.header;
    file.header.criterion = o.criterion;
  } else if (o.task == "disc") {
    if (o.data.empty()) throw std::invalid_argument("--task disc needs --data");
    const LoadedData data = load_data(o.data);
    file.pairs = discriminative_pairs(env.sim, data.dataset, env.cd);
    file.header = {"", 1, o.data, data.fingerprint, env.fingerprint, 0, "confidence", "disc", 0};
  } else {
    throw std::invalid_argument("--task must be gen or disc");
  }
  if (o.max_pairs != 0 && file.pairs.size() > o.max_pairs) file.pairs.resize(o.max_pairs);
  file.header.format = "octopus-prefs";
  write_file_atomic(o.out, prefs_to_jsonl(file));
  std::cout << file.pairs.size() << " pairs\n";
  return kExitOk;
}

// ---- train / gradcheck -------------------------------------------------

struct PrefInputs {
  PrefFile prefs;
  Dataset dataset;
};

PrefInputs load_pref_inputs(const std::string& prefs_path, const std::string& data_override,
                            const Env& env) {
  PrefInputs in;
  in.prefs = prefs_from_jsonl(read_file(prefs_path));
  check_fingerprint(env.fingerprint, in.prefs.header.model_fingerprint, "preference model");
  const std::string data_path = data_override.empty() ? in.prefs.header.dataset : data_override;
  const LoadedData data = load_data(data_path);
  check_fingerprint(in.prefs.header.dataset_fingerprint, data.fingerprint, "dataset");
  in.dataset = data.dataset;
  return in;
}

struct TrainOpts {
  std::string prefs;
  std::string data;
  std::string out;
  std::string report;
  TrainConfig cfg;
  std::uint64_t init_seed = 0;
};

int run_train(const TrainOpts& o, const Env& env) {
  const PrefInputs in = load_pref_inputs(o.prefs, o.data, env);
  const auto pairs = prepare_pairs(env.sim, in.dataset, in.prefs.pairs, env.cd);
  HeadParams head = init_head(HeadConfig{}, o.init_seed);
  const LossReport rep = train(head, pairs, o.cfg);
  save_checkpoint(head, env.fingerprint, o.out);
  if (!o.report.empty()) {
    Json report = report_base("train", env);
    report["prefs"] = o.prefs;
    report["pairs"] = pairs.size();
    report["criterion"] = in.prefs.header.criterion;
    report["head_config"] = head_config_json(head.config());
    report["train_config"] = {{"beta", o.cfg.beta},       {"lr", o.cfg.lr},
                              {"epochs", o.cfg.epochs},   {"batch_size", o.cfg.batch_size},
                              {"seed", o.cfg.seed},       {"clip_norm", o.cfg.clip_norm},
                              {"init_seed", o.init_seed}};
    report["epoch_loss"] = rep.epoch_loss;
    report["epoch_accuracy"] = rep.epoch_accuracy;
    report["step_loss"] = rep.step_loss;
    report["grad_norm"] = rep.grad_norm;
    write_report(o.report, report, "");
  }
  for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e) {
    std::printf("epoch %zu loss %.6f pref_acc %.4f\n", e + 1, rep.epoch_loss[e], rep.epoch_accuracy[e]);
  }
  return kExitOk;
}

struct GradCheckOpts {
  std::string prefs;
  std::string data;
  std::string ckpt;
  std::size_t pair = 0;
  std::uint64_t seed = 0;
  double perturb = 0.15;
  double beta = 1.0;
  double threshold = 1e-4;
};

int run_gradcheck(const GradCheckOpts& o, const Env& env) {
  const PrefInputs in = load_pref_inputs(o.prefs, o.data, env);
  if (o.pair >= in.prefs.pairs.size()) throw std::invalid_argument("--pair is out of range");
  const auto pairs = prepare_pairs(env.sim, in.dataset, {in.prefs.pairs[o.pair]}, env.cd);
  std::optional<HeadParams> head;
  if (!o.ckpt.empty()) {
    Checkpoint ck = load_checkpoint(o.ckpt);
    check_fingerprint(env.fingerprint, ck.model_fingerprint, "checkpoint model");
    head.emplace(std::move(ck.params));
  } else {
    head.emplace(init_head(HeadConfig{}, o.seed));
    Rng r = Rng(o.seed, "gradcheck-perturb");
    for (double& v : head->mutable_flat()) v += o.perturb * r.normal();
  }
  const GradCheckResult res = grad_check(*head, pairs.front(), o.beta);
  std::printf("coordinates %zu max_rel_error %.3e at %zu (analytic %.6e numeric %.6e)\n",
              res.coordinates, res.max_rel_error, res.worst_index, res.analytic, res.numeric);
  return res.max_rel_error < o.threshold ? kExitOk : kExitThreshold;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive contrastive decoding on a synthetic vision-language testbed"};
  app.require_subcommand(1);

  GenDataOpts gd;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a JSONL dataset");
  c_gen->add_option("--seed", gd.seed)->required();
  c_gen->add_option("--n-describe", gd.n_describe)->required();
  c_gen->add_option("--n-exists", gd.n_exists)->required();
  c_gen->add_option("--out", gd.out)->required();
  c_gen->add_option("--cause-mix", gd.cause_mix, "prior,visloss,attnbias,none probabilities");
  c_gen->add_option("--prior-seed", gd.prior_seed);

  EvalOpts ev;
  auto* c_eval = app.add_subcommand("eval", "Decode a dataset under a policy and score it");
  c_eval->add_option("--data", ev.data)->required();
  c_eval->add_option("--policy", ev.policy, "base | fixed:s1|s2|s3 | random | octopus:CKPT");
  c_eval->add_option("--task", ev.task, "gen | disc");
  c_eval->add_option("--report", ev.report)->required();
  c_eval->add_option("--seed", ev.seed, "seed of the random policy");

  std::string ov_data, ov_report;
  auto* c_ov = app.add_subcommand("analyze-overlap", "Which fixed strategies help each sample");
  c_ov->add_option("--data", ov_data)->required();
  c_ov->add_option("--report", ov_report)->required();

  std::string en_data, en_report;
  std::size_t prefix_len = 3;
  auto* c_en = app.add_subcommand("analyze-enumerate",
                                  "Enumerate strategies over the first hallucinated steps");
  c_en->add_option("--data", en_data)->required();
  c_en->add_option("--prefix-len", prefix_len);
  c_en->add_option("--report", en_report)->required();

  RolloutOpts ro;
  auto* c_ro = app.add_subcommand("rollout", "Random-workflow rollouts for Describe samples");
  c_ro->add_option("--data", ro.data)->required();
  c_ro->add_option("--out", ro.out)->required();
  c_ro->add_option("--count", ro.count);
  c_ro->add_option("--seed", ro.seed);

  BuildPrefsOpts bp;
  auto* c_bp = app.add_subcommand("build-prefs", "Split rollouts into preference pairs");
  c_bp->add_option("--rollouts", bp.rollouts);
  c_bp->add_option("--data", bp.data);
  c_bp->add_option("--criterion", bp.criterion, "chair | cover | average");
  c_bp->add_option("--task", bp.task, "gen | disc");
  c_bp->add_option("--out", bp.out)->required();
  c_bp->add_option("--max-pairs", bp.max_pairs);

  TrainOpts tr;
  auto* c_tr = app.add_subcommand("train", "Train the decision head with DPO");
  c_tr->add_option("--prefs", tr.prefs)->required();
  c_tr->add_option("--data", tr.data, "dataset (defaults to the one named in the prefs file)");
  c_tr->add_option("--out", tr.out)->required();
  c_tr->add_option("--report", tr.report);
  c_tr->add_option("--seed", tr.cfg.seed);
  c_tr->add_option("--init-seed", tr.init_seed);
  c_tr->add_option("--epochs", tr.cfg.epochs);
  c_tr->add_option("--lr", tr.cfg.lr);
  c_tr->add_option("--batch-size", tr.cfg.batch_size);
  c_tr->add_option("--beta", tr.cfg.beta);
  c_tr->add_option("--clip", tr.cfg.clip_norm);

  GradCheckOpts gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of the DPO gradient");
  c_gc->add_option("--prefs", gc.prefs)->required();
  c_gc->add_option("--data", gc.data);
  c_gc->add_option("--ckpt", gc.ckpt, "checkpoint to check (default: a random head)");
  c_gc->add_option("--pair", gc.pair);
  c_gc->add_option("--seed", gc.seed);
  c_gc->add_option("--perturb", gc.perturb, "std of the noise added to the random head");
  c_gc->add_option("--beta", gc.beta);
  c_gc->add_option("--threshold", gc.threshold, "exit 3 when the max relative error reaches this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const Env env;
    if (c_gen->parsed()) return run_gen_data(gd);
    if (c_eval->parsed()) return run_eval(ev, env);
    if (c_ov->parsed()) return run_overlap(ov_data, ov_report, env);
    if (c_en->parsed()) return run_enumerate(en_data, prefix_len, en_report, env);
    if (c_ro->parsed()) return run_rollout(ro, env);
    if (c_bp->parsed()) return run_build_prefs(bp, env);
    if (c_tr->parsed()) return run_train(tr, env);
    if (c_gc->parsed()) return run_gradcheck(gc, env);
  } catch (const DataIntegrityError& e) {
    std::cerr << "octopus: data integrity error: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const LoadError& e) {
    std::cerr << "octopus: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const std::exception& e) {
    std::cerr << "octopus: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
