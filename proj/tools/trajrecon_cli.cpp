// trajrecon: vehicle trajectory reconciliation toolkit.
//
// Subcommands cover the full path from synthetic ground truth to scored
// output: generate, perturb, associate, rectify, evaluate, plot, run.

#include <CLI11.hpp>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "trajrecon/association.hpp"
#include "trajrecon/benchmark.hpp"
#include "trajrecon/config.hpp"
#include "trajrecon/evaluation.hpp"
#include "trajrecon/jsonl.hpp"
#include "trajrecon/pipeline.hpp"
#include "trajrecon/plot.hpp"
#include "trajrecon/rectification.hpp"

namespace {

using namespace trajrecon;

EvalDataset to_eval(const LoadedDataset& d, double dt) {
  return d.is_trajectories ? EvalDataset::from_trajectories(d.trajectories, dt)
                           : EvalDataset::from_fragments(d.fragments, dt);
}

void print_stats_block(std::ostream& out, const char* title, const DistStats& gt,
                       const DistStats& pred) {
  const char* rows[] = {"min", "max", "avg", "stdev"};
  const double gvals[] = {gt.min, gt.max, gt.mean, gt.stdev};
  const double pvals[] = {pred.min, pred.max, pred.mean, pred.stdev};
  for (int i = 0; i < 4; ++i) {
    out << std::left << std::setw(26) << (i == 0 ? title : "") << std::setw(8) << rows[i]
        << std::right << std::setw(12) << std::setprecision(5) << gvals[i] << std::setw(12)
        << pvals[i] << '\n';
  }
}

void print_report_table(std::ostream& out, const EvalReport& r) {
  const auto metric = [&](const char* name, double gt, double pred) {
    out << std::left << std::setw(34) << name << std::right << std::setw(12) << gt
        << std::setw(12) << std::setprecision(4) << pred << '\n';
  };
  out << std::left << std::setw(34) << "Metric" << std::right << std::setw(12) << "GT"
      << std::setw(12) << "PRED" << '\n';
  metric("Precision", 1.0, r.precision);
  metric("Recall", 1.0, r.recall);
  metric("MOTA", 1.0, r.mota);
  metric("MOTP", 1.0, r.motp);
  metric("Fgmt/GT", 0.0, r.fgmt_per_gt);
  metric("Sw/GT", 0.0, r.sw_per_gt);
  metric("No. trajectories", static_cast<double>(r.gt_tracks), static_cast<double>(r.pred_tracks));
  print_stats_block(out, "Trajectory lengths (ft)", r.gt_stats.length, r.pred_stats.length);
  print_stats_block(out, "Speed (ft/sec)", r.gt_stats.speed, r.pred_stats.speed);
  print_stats_block(out, "Acceleration (ft/sec^2)", r.gt_stats.accel, r.pred_stats.accel);
}

json report_to_json(const EvalReport& r) {
  json j;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["mota"] = r.mota;
  j["motp"] = r.motp;
  j["fgmt_per_gt"] = r.fgmt_per_gt;
  j["sw_per_gt"] = r.sw_per_gt;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["fn"] = r.fn;
  j["switches"] = r.switches;
  j["fragmentations"] = r.fragmentations;
  j["gt_detections"] = r.gt_detections;
  j["gt_tracks"] = r.gt_tracks;
  j["pred_tracks"] = r.pred_tracks;
  const auto stats = [](const KinematicStats& s) {
    json o;
    for (const auto& [name, d] : {std::pair{"length", s.length}, {"speed", s.speed},
                                  {"accel", s.accel}}) {
      o[name] = {{"min", d.min}, {"max", d.max}, {"mean", d.mean}, {"stdev", d.stdev},
                 {"count", d.count}};
    }
    return o;
  };
  j["pred_stats"] = stats(r.pred_stats);
  j["gt_stats"] = stats(r.gt_stats);
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vehicle trajectory reconciliation"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("--config", config_path, "configuration file (key = value)");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--threads", threads, "worker pool size (overridden by TRAJRECON_THREADS)");

  // generate
  auto* gen = app.add_subcommand("generate", "simulate ground-truth trajectories");
  std::string gen_out = "gt.jsonl";
  gen->add_option("-o,--output", gen_out, "output dataset");

  // perturb
  auto* per = app.add_subcommand("perturb", "corrupt ground truth into raw fragments");
  std::string per_in = "gt.jsonl", per_out = "raw.jsonl";
  per->add_option("-i,--input", per_in, "ground-truth dataset");
  per->add_option("-o,--output", per_out, "output fragments");

  // associate
  auto* assoc = app.add_subcommand("associate", "stitch fragments into chains");
  std::string assoc_in = "raw.jsonl", assoc_out = "chains.jsonl";
  double assoc_horizon = 60.0, assoc_window = 5.0;
  assoc->add_option("-i,--input", assoc_in, "fragment dataset");
  assoc->add_option("-o,--output", assoc_out, "output chains");
  assoc->add_option("--horizon", assoc_horizon, "eviction horizon, seconds");
  assoc->add_option("--reorder-window", assoc_window, "ingest reorder window, seconds");

  // rectify
  auto* rect = app.add_subcommand("rectify", "denoise, impute and bound chains");
  std::string rect_in = "chains.jsonl", rect_out = "rec.jsonl";
  rect->add_option("-i,--input", rect_in, "chains file");
  rect->add_option("-o,--output", rect_out, "output trajectories");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score predictions against ground truth");
  std::string eval_pred, eval_gt, eval_json;
  double eval_iou = 0.3;
  eval->add_option("--pred", eval_pred, "prediction dataset")->required();
  eval->add_option("--gt", eval_gt, "ground-truth dataset")->required();
  eval->add_option("--report", eval_json, "also write the report as JSON");
  eval->add_option("--iou", eval_iou, "match threshold");

  // plot
  auto* plot = app.add_subcommand("plot", "time-space diagram");
  std::string plot_in, plot_out = "timespace.png", plot_gt;
  int plot_lane = 0;
  bool plot_csv = false;
  plot->add_option("-i,--input", plot_in, "dataset")->required();
  plot->add_option("-o,--output", plot_out, "output image or csv");
  plot->add_option("--lane", plot_lane, "restrict to one lane (1-based)");
  plot->add_flag("--csv", plot_csv, "write a csv point dump instead of an image");
  plot->add_option("--gt", plot_gt, "color points by tp/fp/fn against this ground truth");

  // run
  auto* run = app.add_subcommand("run", "full pipeline from a config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    ConfigMap config;
    if (!config_path.empty()) config = ConfigMap::from_file(config_path);
    if (seed != 0) config.set("seed", std::to_string(seed));
    if (threads != 0) config.set("threads", std::to_string(threads));
    const std::uint64_t effective_seed =
        static_cast<std::uint64_t>(config.get_int("seed", 0));
    const double dt = config.get_double("dt", 0.04);

    if (*gen) {
      ScenarioSpec spec = scenario_from(config);
      if (spec.demand.empty())
        spec.demand = {{0.0, spec.duration, 1200.0}};
      const auto gt = generate_ground_truth(spec, effective_seed);
      write_fragments(gen_out, gt);
      std::cout << "generated " << gt.size() << " trajectories -> " << gen_out << '\n';
    } else if (*per) {
      const auto gt = read_fragments(per_in);
      NoiseSpec noise = noise_from(config);
      noise.seed = effective_seed;
      const CameraLayout layout = cameras_from(config);
      if (!layout.cameras.empty())
        layout.validate(config.get_double("scenario.length", 2000.0));
      const auto raw = perturb(gt, masks_from(config), layout, noise);
      write_fragments(per_out, raw);
      std::cout << "perturbed " << gt.size() << " trajectories into " << raw.size()
                << " fragments -> " << per_out << '\n';
    } else if (*assoc) {
      std::ifstream in(assoc_in);
      if (!in) throw std::runtime_error("cannot open input " + assoc_in);
      const CostModelParams params = cost_params_from(config);
      FragmentStream stream(in, config.get_double("reorder_window", assoc_window));
      std::map<int, AssociationState> states;
      const double horizon = config.get_double("eviction_horizon", assoc_horizon);
      std::vector<Chain> chains;
      while (auto frag = stream.next()) {
        const int dir = frag->direction;
        auto it = states.find(dir);
        if (it == states.end())
          it = states.emplace(dir, AssociationState(params, horizon)).first;
        it->second.add(std::move(*frag));
        for (auto& c : it->second.evict()) chains.push_back(std::move(c));
      }
      for (auto& [dir, st] : states)
        for (auto& c : st.flush()) chains.push_back(std::move(c));
      std::sort(chains.begin(), chains.end(), [](const Chain& a, const Chain& b) {
        if (a.first_t() != b.first_t()) return a.first_t() < b.first_t();
        return a.fragments.front().id < b.fragments.front().id;
      });
      write_chains(assoc_out, chains);
      std::cout << "associated " << stream.stats().emitted << " fragments into "
                << chains.size() << " chains (" << stream.stats().rejected
                << " rejected) -> " << assoc_out << '\n';
    } else if (*rect) {
      const auto chains = read_chains(rect_in);
      RectifierConfig rc = rectifier_from(config);
      rc.dt = dt;
      std::vector<Trajectory> out;
      for (std::size_t i = 0; i < chains.size(); ++i)
        out.push_back(rectify_trajectory(chains[i], rc,
                                         "t" + std::to_string(1000000 + i).substr(1)));
      write_trajectories(rect_out, out);
      std::size_t unsolved = 0;
      for (const auto& t : out) unsolved += t.solved ? 0 : 1;
      std::cout << "rectified " << out.size() << " trajectories (" << unsolved
                << " passed through) -> " << rect_out << '\n';
    } else if (*eval) {
      const auto gt = to_eval(load_dataset(eval_gt), dt);
      const auto pred = to_eval(load_dataset(eval_pred), dt);
      const EvalReport report = evaluate(gt, pred, eval_iou);
      print_report_table(std::cout, report);
      if (!eval_json.empty()) {
        std::ofstream jf(eval_json);
        jf << report_to_json(report).dump(2) << '\n';
      }
    } else if (*plot) {
      const auto data = to_eval(load_dataset(plot_in), dt);
      PlotOptions opt;
      opt.as_csv = plot_csv;
      if (plot_lane > 0) opt.lane = plot_lane;
      opt.lane_width = config.get_double("scenario.lane_width", opt.lane_width);
      if (!plot_gt.empty()) {
        const auto gt = to_eval(load_dataset(plot_gt), dt);
        const auto classes =
            PlotClasses::from_matches(match_frames(gt, data, eval_iou), gt, data);
        emit_timespace_plot(data, plot_out, opt, &classes);
      } else {
        emit_timespace_plot(data, plot_out, opt);
      }
      std::cout << "plotted " << data.tracks.size() << " tracks -> " << plot_out << '\n';
    } else if (*run) {
      if (config_path.empty()) throw std::runtime_error("run requires --config");
      const PipelineConfig pc = PipelineConfig::from_config(config);
      const PipelineSummary s = run_pipeline(pc);
      std::cout << "pipeline: " << s.fragments_in << " fragments in (" << s.rejected
                << " rejected), " << s.worker_chains << " worker chains, " << s.master_merges
                << " boundary merges, " << s.trajectories << " trajectories ("
                << s.unsolved << " unsolved), total cost " << std::setprecision(10)
                << s.total_cost << ", " << std::setprecision(3) << s.wall_seconds
                << " s -> " << pc.output << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
