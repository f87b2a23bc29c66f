// Command-line front end: ingest, build-map, rank, localize, evaluate, render
// and synth (demo data). Exit codes: 0 success, 2 validation, 3 numerical,
// 4 I/O.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "expsel/expsel.hpp"

namespace fs = std::filesystem;
using namespace expsel;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

int exit_code_for(const Error& e) {
  switch (e.error_class()) {
    case ErrorClass::Validation: return kExitValidation;
    case ErrorClass::Numerical: return kExitNumerical;
    case ErrorClass::Io: return kExitIo;
  }
  return kExitValidation;
}

struct WarmupFlags {
  std::size_t frames = 0;
  double seconds = 0.0;

  void add(CLI::App* cmd) {
    auto* f = cmd->add_option("--warmup-frames", frames, "Use the first K frames as warmup (default 100)");
    auto* s = cmd->add_option("--warmup-seconds", seconds, "Use the first S seconds as warmup");
    f->excludes(s);
  }

  WarmupPolicy policy() const {
    if (seconds > 0.0) return FirstSeconds{seconds};
    return FirstKFrames{frames > 0 ? frames : 100};
  }
};

struct MatcherFlags {
  double frame_tolerance = -1.0;
  double metric_tolerance = -1.0;

  void add(CLI::App* cmd) {
    auto* f = cmd->add_option("--frame-tolerance", frame_tolerance, "Correct if within K frames (default 5)");
    auto* m = cmd->add_option("--metric-tolerance", metric_tolerance, "Correct if within M metres (GPS poses)");
    f->excludes(m);
  }

  MatcherSpec spec() const {
    if (metric_tolerance >= 0.0) return {MatcherSpec::Kind::Metres, metric_tolerance};
    return {MatcherSpec::Kind::Frames, frame_tolerance >= 0.0 ? frame_tolerance : 5.0};
  }
};

struct HistogramFlags {
  HistogramConfig cfg;
  void add(CLI::App* cmd) {
    cmd->add_option("--bins", cfg.bin_count, "Histogram bins per neuron")->capture_default_str();
    cmd->add_option("--margin", cfg.margin_fraction, "Edge margin as a fraction of the range")->capture_default_str();
  }
};

std::vector<SelectionMethod> parse_methods(const std::vector<std::string>& names) {
  std::vector<SelectionMethod> out;
  for (const auto& n : names) out.push_back(parse_selection_method(n));
  return out;
}

std::vector<FeatureSet> ingest_all(const std::vector<std::string>& paths) {
  std::vector<FeatureSet> sets;
  for (const auto& p : paths) sets.push_back(ingest_feature_set(p));
  return sets;
}

std::vector<const FeatureSet*> pointers(const std::vector<FeatureSet>& sets) {
  std::vector<const FeatureSet*> out;
  for (const auto& s : sets) out.push_back(&s);
  return out;
}

/// Writes every file or none: on failure, files already written are removed.
void write_outputs(const std::vector<std::pair<fs::path, std::string>>& files) {
  std::vector<fs::path> written;
  try {
    for (const auto& [path, data] : files) {
      io::write_file(path, data);
      written.push_back(path);
    }
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    throw;
  }
}

void check_output_dir(const fs::path& file) {
  const auto parent = file.parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    fail(ErrorCode::Io, "output directory " + parent.string() + " does not exist");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experience selection by activation-histogram similarity"};
  app.set_config("--config", "", "TOML/INI file supplying any flag; command-line flags take precedence");
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "Worker threads for data-parallel stages")->capture_default_str();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a FEX1 feature file and print a summary");
  std::string ingest_path, ingest_manifest, ingest_rewrite;
  ingest->add_option("features", ingest_path, "FEX1 file")->required();
  ingest->add_option("--manifest", ingest_manifest, "Manifest path (default <features>.json)");
  ingest->add_option("--rewrite", ingest_rewrite, "Write the validated set back out to this path");

  // build-map
  auto* build = app.add_subcommand("build-map", "Build map artifacts from experiences");
  std::string map_out;
  std::vector<std::string> build_inputs;
  HistogramFlags build_hist;
  build->add_option("--out", map_out, "Map directory")->required();
  build->add_option("features", build_inputs, "FEX1 files, one per experience")->required();
  build_hist.add(build);

  // rank
  auto* rank = app.add_subcommand("rank", "Rank map experiences against warmup frames");
  std::string rank_map, rank_live, rank_out;
  std::vector<std::string> rank_methods{"vdna"};
  WarmupFlags rank_warmup;
  rank->add_option("--map", rank_map, "Map directory")->required();
  rank->add_option("--live", rank_live, "FEX1 file of the live experience")->required();
  rank->add_option("--method", rank_methods, "vdna, fd and/or pixel")->delimiter(',')->capture_default_str();
  rank->add_option("--out", rank_out, "Write rankings as CSV");
  rank_warmup.add(rank);

  // localize
  auto* localize = app.add_subcommand("localize", "Nearest-neighbour localisation and Recall@1");
  std::string loc_query, loc_matrix;
  std::vector<std::string> loc_refs;
  MatcherFlags loc_matcher;
  localize->add_option("--query", loc_query, "FEX1 file of the query experience")->required();
  localize->add_option("--ref", loc_refs, "Reference FEX1 files (several form a composite map)")->required();
  localize->add_option("--matrix-out", loc_matrix, "Write the difference matrix (DMX1)");
  loc_matcher.add(localize);

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Leave-one-out evaluation of experience selection");
  std::vector<std::string> eval_experiences, eval_groups;
  std::string eval_split = "default", eval_csv, eval_summary, fixture_recalls, fixture_distances;
  std::vector<std::string> eval_methods{"vdna", "fd", "pixel"};
  bool no_random = false;
  WarmupFlags eval_warmup;
  MatcherFlags eval_matcher;
  HistogramFlags eval_hist;
  evaluate_cmd->add_option("--experience", eval_experiences, "FEX1 file (repeat; one split)");
  evaluate_cmd->add_option("--split", eval_split, "Split label for --experience inputs")->capture_default_str();
  evaluate_cmd->add_option("--group", eval_groups, "SPLIT:file1,file2,... (repeat for several splits)");
  evaluate_cmd->add_option("--methods", eval_methods, "Selection methods")->delimiter(',')->capture_default_str();
  evaluate_cmd->add_flag("--no-random", no_random, "Skip the random-ordering baseline");
  evaluate_cmd->add_option("--csv", eval_csv, "Per-slot CSV report")->required();
  evaluate_cmd->add_option("--summary", eval_summary, "JSON summary with per-method averages");
  evaluate_cmd->add_option("--fixture-recalls", fixture_recalls, "Recall table (fixture mode)");
  evaluate_cmd->add_option("--fixture-distances", fixture_distances, "Distance table (fixture mode)");
  eval_warmup.add(evaluate_cmd);
  eval_matcher.add(evaluate_cmd);
  eval_hist.add(evaluate_cmd);

  // render
  auto* render = app.add_subcommand("render", "Render a difference matrix as a PGM image");
  std::string render_in, render_out;
  render->add_option("matrix", render_in, "DMX1 matrix file")->required();
  render->add_option("out", render_out, "Output .pgm")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Write synthetic experiences at increasing domain shift");
  std::string synth_out;
  std::size_t synth_count = 3;
  std::uint64_t synth_seed = kDefaultSeed;
  SyntheticConfig synth_cfg;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--experiences", synth_count, "Number of experiences (shift 0, 1, ...)")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
  synth->add_option("--images", synth_cfg.images, "Frames per experience")->capture_default_str();
  synth->add_option("--neurons", synth_cfg.neurons, "Neurons (C)")->capture_default_str();
  synth->add_option("--samples", synth_cfg.samples_per_image, "Samples per neuron per image (S)")->capture_default_str();
  synth->add_option("--dim", synth_cfg.embedding_dim, "Embedding size (D)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*ingest) {
      const FeatureSet fs = ingest_manifest.empty() ? ingest_feature_set(ingest_path)
                                                    : ingest_feature_set(ingest_path, fs::path(ingest_manifest));
      if (!ingest_rewrite.empty()) {
        check_output_dir(ingest_rewrite);
        write_feature_set(fs, ingest_rewrite);
      }
      nlohmann::json summary = {{"experience_id", fs.experience_id}, {"backbone_id", fs.backbone_id},
                                {"layer_id", fs.layer_id},           {"image_count", fs.image_count()},
                                {"neuron_count", fs.neuron_count},   {"samples_per_image", fs.samples_per_image},
                                {"embedding_dim", fs.embedding_dim}};
      std::cout << summary.dump(2) << "\n";
    } else if (*build) {
      const auto sets = ingest_all(build_inputs);
      const auto ptrs = pointers(sets);
      const ExperienceMap map = build_map(std::span<const FeatureSet* const>(ptrs), build_hist.cfg, threads);
      const fs::path out = map_out;
      fs::path staging = out;
      staging += ".partial";
      std::error_code ec;
      fs::remove_all(staging, ec);
      try {
        save_map(map, staging);
        fs::remove_all(out, ec);
        fs::rename(staging, out);
      } catch (...) {
        fs::remove_all(staging, ec);
        throw;
      }
      std::cout << "built map with " << map.experiences.size() << " experiences at " << out.string() << "\n";
    } else if (*rank) {
      const auto methods = parse_methods(rank_methods);
      const ExperienceMap map = load_map(rank_map);
      const FeatureSet live = ingest_feature_set(rank_live);
      const WarmupSelection warmup = select_warmup(live, rank_warmup.policy());
      if (warmup.shorter_than_policy) {
        std::cerr << "warning: '" << live.experience_id << "' is shorter than the warmup window; using all "
                  << warmup.set.image_count() << " frames\n";
      }
      std::string csv = "method,position,experience,score\n";
      for (SelectionMethod m : methods) {
        const ExperienceRanking r = select_experience(warmup.set, map, m, threads);
        for (std::size_t k = 0; k < r.entries.size(); ++k) {
          csv += std::string(to_string(m)) + ',' + std::to_string(k + 1) + ',' + r.entries[k].experience_id + ',' +
                 format_number(r.entries[k].score) + '\n';
        }
        std::cout << to_string(m) << ": selected " << r.entries.front().experience_id << "\n";
      }
      if (!rank_out.empty()) {
        check_output_dir(rank_out);
        write_outputs({{rank_out, csv}});
      } else {
        std::cout << csv;
      }
    } else if (*localize) {
      const FeatureSet query = ingest_feature_set(loc_query);
      const auto refs = ingest_all(loc_refs);
      auto all = pointers(refs);
      const DifferenceMatrix dm = difference_matrix(query, std::span<const FeatureSet* const>(all), threads);
      all.push_back(&query);
      const LocalisationResult res = recall_at_1(dm, loc_matcher.spec().for_query(query), pose_table(all));
      if (!loc_matrix.empty()) {
        check_output_dir(loc_matrix);
        write_outputs({{loc_matrix, encode_difference_matrix(dm)}});
      }
      std::cout << "Recall@1 " << format_number(res.recall_at_1) << "% over " << dm.rows() << " queries\n";
    } else if (*evaluate_cmd) {
      EvaluationReport report;
      const bool fixture = !fixture_recalls.empty() || !fixture_distances.empty();
      check_output_dir(eval_csv);
      if (!eval_summary.empty()) check_output_dir(eval_summary);
      if (fixture) {
        if (fixture_recalls.empty() || fixture_distances.empty()) {
          fail(ErrorCode::InvalidArgument, "fixture mode needs both --fixture-recalls and --fixture-distances");
        }
        report = evaluate_fixture(io::read_file(fixture_recalls), io::read_file(fixture_distances), !no_random);
      } else {
        std::vector<EvaluationGroup> groups;
        if (!eval_experiences.empty()) groups.push_back({eval_split, ingest_all(eval_experiences)});
        for (const auto& spec : eval_groups) {
          const auto colon = spec.find(':');
          if (colon == std::string::npos) fail(ErrorCode::InvalidArgument, "--group expects SPLIT:file1,file2,...");
          std::vector<std::string> files;
          std::string rest = spec.substr(colon + 1);
          for (std::size_t start = 0;;) {
            const auto comma = rest.find(',', start);
            files.push_back(rest.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
          }
          for (const auto& f : files) {
            if (!fs::is_regular_file(f)) fail(ErrorCode::InvalidArgument, "no such feature file: " + f);
          }
          groups.push_back({spec.substr(0, colon), ingest_all(files)});
        }
        EvaluationOptions opts;
        opts.warmup = eval_warmup.policy();
        opts.matcher = eval_matcher.spec();
        opts.histogram = eval_hist.cfg;
        opts.methods = parse_methods(eval_methods);
        opts.include_random = !no_random;
        opts.threads = threads;
        report = evaluate(groups, opts);
        for (const auto& q : report.queries) {
          if (q.warmup_shorter_than_policy) {
            std::cerr << "warning: query '" << q.query << "' is shorter than the warmup window\n";
          }
        }
      }
      std::vector<std::pair<fs::path, std::string>> files{{eval_csv, report_csv(report)}};
      const nlohmann::json summary = report_summary(report);
      if (!eval_summary.empty()) files.emplace_back(eval_summary, summary.dump(2) + "\n");
      write_outputs(files);
      for (const auto& [method, avg] : summary.at("methods").items()) {
        std::cout << method << ": mean ranking error " << format_number(avg.at("mean_penalty").get<double>()) << "% over "
                  << avg.at("slots").get<std::size_t>() << " slots\n";
      }
    } else if (*render) {
      const DifferenceMatrix dm = decode_difference_matrix(io::read_file(render_in));
      check_output_dir(render_out);
      write_outputs({{render_out, render_pgm(dm)}});
    } else if (*synth) {
      const fs::path out = synth_out;
      std::error_code ec;
      fs::create_directories(out, ec);
      if (ec) fail(ErrorCode::Io, "cannot create " + out.string());
      const SyntheticRoute route = SyntheticRoute::make(synth_cfg, synth_seed);
      for (std::size_t i = 0; i < synth_count; ++i) {
        const std::string id = "shift" + std::to_string(i);
        const FeatureSet fs = make_synthetic_experience(route, id, static_cast<double>(i), synth_seed + 1 + i);
        write_feature_set(fs, out / (id + ".fex"));
        std::cout << (out / (id + ".fex")).string() << "\n";
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
