// bss — batch CLI for the mvbss separation toolkit.
//
// Subcommands: separate, evaluate, mix, bench. Every command writes a
// manifest with the resolved flags and seed; re-running with those values
// reproduces the outputs bit-exactly.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "bss/evaluation.hpp"
#include "bss/mixsim.hpp"
#include "bss/separators.hpp"
#include "bss/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bss;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t resolve_seed(std::uint64_t flag_seed) {
  if (const char* env = std::getenv("BSS_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return flag_seed;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoFailure("cannot open " + path.string());
  f << text;
  if (!f) throw IoFailure("write error on " + path.string());
}

std::string trace_csv(const std::vector<double>& trace) {
  std::ostringstream os;
  os << "iteration,objective\n";
  for (size_t i = 0; i < trace.size(); ++i) {
    os << i + 1 << "," << format_double(trace[i]) << "\n";
  }
  return os.str();
}

json matrix_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat matrix_from_json(const json& rows) {
  const auto n_rows = rows.size();
  const auto n_cols = rows.at(0).size();
  Mat m(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_cols));
  for (size_t r = 0; r < n_rows; ++r) {
    for (size_t c = 0; c < n_cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows.at(r).at(c).get<double>();
    }
  }
  return m;
}

std::uint64_t hash_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)),
                          std::istreambuf_iterator<char>());
  return fnv1a(bytes.data(), bytes.size());
}

Vec load_mono(const std::string& path) {
  const MultichannelWaveform w = read_wav(path);
  return w.samples.col(0);
}

// ---------------------------------------------------------------------------
// separate

struct SeparateArgs {
  std::string input;
  std::string method = "m-ilrma";
  int sources = 2;
  int bases = 10;
  int iters = 100;
  double eta = 0.5;
  double gamma = 1e-2;
  std::uint64_t seed = 0;
  std::string out = ".";
  bool trace = false;
};

json model_json(const SeparationRun& run) {
  json j;
  j["frame_length"] = run.config.frame_length;
  j["frame_shift"] = run.config.frame_shift;
  j["eta"] = run.config.eta;
  j["gamma_final"] = run.gamma_final;
  j["sources"] = json::array();
  for (int n = 0; n < run.model.sources; ++n) {
    j["sources"].push_back(
        {{"W", matrix_json(run.model.W[static_cast<size_t>(n)])},
         {"H", matrix_json(run.model.H[static_cast<size_t>(n)])}});
  }
  return j;
}

int cmd_separate(const SeparateArgs& args) {
  const MultichannelWaveform mixture = read_wav(args.input);
  const Method method = method_from_string(args.method);

  const bool needs_determined = method != Method::mnmf &&
                                method != Method::m_mnmf;
  if (needs_determined && mixture.channels() != args.sources) {
    std::cerr << args.method << " handles the determined case only: file has "
              << mixture.channels() << " channels, --sources is "
              << args.sources << "\n";
    return kExitUsage;
  }
  if (args.sources < 1 || args.bases < 1 || args.iters < 1 ||
      args.eta <= 0.0 || args.gamma < 0.0) {
    std::cerr << "invalid numeric flags\n";
    return kExitUsage;
  }

  SeparatorConfig cfg;
  cfg.method = method;
  cfg.n_sources = args.sources;
  cfg.n_bases = args.bases;
  cfg.max_iterations = args.iters;
  cfg.eta = args.eta;
  cfg.gamma_init = args.gamma;
  cfg.seed = resolve_seed(args.seed);

  fs::create_directories(args.out);
  const auto t0 = std::chrono::steady_clock::now();

  json manifest;
  manifest["command"] = "separate";
  manifest["toolkit_version"] = kVersion;
  manifest["seed"] = cfg.seed;
  manifest["flags"] = {{"input", args.input},   {"method", args.method},
                       {"sources", args.sources}, {"bases", args.bases},
                       {"iters", args.iters},   {"eta", args.eta},
                       {"gamma", args.gamma},   {"out", args.out},
                       {"trace", args.trace}};
  manifest["input_hash"] = hex_string(hash_file(args.input));

  SeparationRun run;
  try {
    const MultichannelSpectrogram spec =
        stft(mixture, cfg.frame_length, cfg.frame_shift);
    run = separate(spec, cfg);
  } catch (const NumericalBreakdown& e) {
    std::cerr << "numerical breakdown: " << e.what() << "\n";
    write_text(fs::path(args.out) / "trace.csv", trace_csv(e.partial_trace));
    manifest["status"] = "numerical_breakdown";
    manifest["error"] = e.what();
    write_text(fs::path(args.out) / "manifest.json", manifest.dump(2) + "\n");
    return kExitNumerical;
  }

  json outputs = json::array();
  for (int n = 0; n < args.sources; ++n) {
    std::ostringstream name;
    name << "source_" << n + 1 << ".wav";
    const fs::path path = fs::path(args.out) / name.str();
    write_wav(path.string(), run.separated[static_cast<size_t>(n)], 32);
    outputs.push_back(path.string());
  }
  if (args.trace) {
    write_text(fs::path(args.out) / "trace.csv",
               trace_csv(run.objective_trace));
    outputs.push_back((fs::path(args.out) / "trace.csv").string());
    if (!run.model.W.empty()) {
      write_text(fs::path(args.out) / "model.json",
                 model_json(run).dump() + "\n");
      outputs.push_back((fs::path(args.out) / "model.json").string());
    }
  }

  manifest["status"] = "ok";
  manifest["outputs"] = outputs;
  manifest["iterations"] = run.iteration_count;
  manifest["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  manifest["run"] = json::parse(run.manifest_json);
  write_text(fs::path(args.out) / "manifest.json", manifest.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::vector<std::string> est;
  std::vector<std::string> ref;
  std::string mix;
  std::string metrics = "sdr,sir";
  std::string model;
  std::string manifest;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& args) {
  if (args.est.empty() || args.est.size() != args.ref.size()) {
    std::cerr << "estimate/reference counts differ\n";
    return kExitUsage;
  }

  std::vector<Vec> est, ref;
  long min_len = std::numeric_limits<long>::max();
  for (const auto& p : args.est) {
    est.push_back(load_mono(p));
    min_len = std::min(min_len, est.back().size());
  }
  for (const auto& p : args.ref) {
    ref.push_back(load_mono(p));
    min_len = std::min(min_len, ref.back().size());
  }
  std::optional<Vec> mix;
  if (!args.mix.empty()) {
    mix = load_mono(args.mix);
    min_len = std::min(min_len, mix->size());
  }
  for (auto& v : est) v.conservativeResize(min_len);
  for (auto& v : ref) v.conservativeResize(min_len);
  if (mix) mix->conservativeResize(min_len);

  const EvalReport report = mix ? align_permutation(est, ref, *mix)
                                : align_permutation(est, ref);

  const bool want_model_metrics =
      args.metrics.find("sparseness") != std::string::npos ||
      args.metrics.find("orthogonality") != std::string::npos ||
      args.metrics.find("uniqueness") != std::string::npos;
  std::vector<double> sp, orth, uniq;
  if (want_model_metrics) {
    if (args.model.empty()) {
      std::cerr << "--model is required for basis metrics\n";
      return kExitUsage;
    }
    std::ifstream f(args.model);
    if (!f) {
      std::cerr << "cannot open model file\n";
      return kExitUsage;
    }
    const json m = json::parse(f);
    const int frame_length = m.at("frame_length").get<int>();
    const int frame_shift = m.at("frame_shift").get<int>();
    for (size_t n = 0; n < m.at("sources").size(); ++n) {
      const Mat w = matrix_from_json(m.at("sources").at(n).at("W"));
      const Mat h = matrix_from_json(m.at("sources").at(n).at("H"));
      sp.push_back(sparseness(w));
      Mat w_unit = w;
      for (Eigen::Index k = 0; k < w_unit.cols(); ++k) {
        const double norm = w_unit.col(k).norm();
        if (norm > 0.0) w_unit.col(k) /= norm;
      }
      orth.push_back(orthogonality_score(w_unit));
      if (n < est.size()) {
        // Data matrix for the uniqueness check: the estimate's power
        // spectrogram under the model's framing.
        MultichannelWaveform wav;
        wav.sample_rate = 16000;
        wav.samples = est[n];
        const auto spec = stft(wav, frame_length, frame_shift);
        Mat t = spec.chan[0].cwiseAbs2();
        const int frames = std::min<int>(t.cols(), h.cols());
        uniq.push_back(uniqueness_score(w, t.leftCols(frames),
                                        h.leftCols(frames)));
      }
    }
  }

  std::string mixture_name = "-", method = "-", runtime = "-", seed = "-";
  if (!args.manifest.empty()) {
    std::ifstream f(args.manifest);
    if (f) {
      const json m = json::parse(f);
      if (m.contains("flags") && m["flags"].contains("input")) {
        mixture_name = m["flags"]["input"].get<std::string>();
      }
      if (m.contains("flags") && m["flags"].contains("method")) {
        method = m["flags"]["method"].get<std::string>();
      }
      if (m.contains("wall_time_s")) {
        runtime = format_double(m["wall_time_s"].get<double>());
      }
      if (m.contains("seed")) {
        seed = std::to_string(m["seed"].get<std::uint64_t>());
      }
    }
  }

  std::ostringstream csv;
  csv << "mixture,method,source,sdr_db,sir_db,sdri_db,siri_db,"
         "sparseness,orthogonality,uniqueness,runtime_s,seed\n";
  for (size_t r = 0; r < ref.size(); ++r) {
    csv << mixture_name << "," << method << "," << r + 1 << ","
        << format_double(report.sdr[r]) << "," << format_double(report.sir[r])
        << ",";
    csv << (report.sdr_improvement.empty()
                ? "-"
                : format_double(report.sdr_improvement[r]))
        << ",";
    csv << (report.sir_improvement.empty()
                ? "-"
                : format_double(report.sir_improvement[r]))
        << ",";
    csv << (r < sp.size() ? format_double(sp[r]) : "-") << ","
        << (r < orth.size() ? format_double(orth[r]) : "-") << ","
        << (r < uniq.size() ? format_double(uniq[r]) : "-") << ","
        << runtime << "," << seed << "\n";
  }
  if (args.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(args.out, csv.str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// mix

struct Scenario {
  std::string type = "convolutive";  // or "instantaneous"
  RoomScenario room;
  int n_sources = 2;
  int n_channels = 2;
  double duration_s = 2.0;
  int bases = 6;
  std::uint64_t seed = 0;
  std::string mixing = "random_constant";  // or "random_per_freq"
  int frame_length = 1024;
  int frame_shift = 512;
};

Scenario parse_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoFailure("cannot open scenario " + path);
  Scenario sc;
  sc.room.source_positions.clear();
  sc.room.mic_positions.clear();
  std::string line;
  while (std::getline(f, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto strip = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    };
    strip(key);
    strip(value);
    std::istringstream vs(value);
    if (key == "type") {
      vs >> sc.type;
    } else if (key == "room") {
      vs >> sc.room.room_dims(0) >> sc.room.room_dims(1) >>
          sc.room.room_dims(2);
    } else if (key == "rt60") {
      vs >> sc.room.rt60;
    } else if (key == "order") {
      if (value == "auto") {
        sc.room.reflection_order = -1;
      } else {
        vs >> sc.room.reflection_order;
      }
    } else if (key == "sample_rate") {
      vs >> sc.room.sample_rate;
    } else if (key == "source") {
      Eigen::Vector3d p;
      vs >> p(0) >> p(1) >> p(2);
      sc.room.source_positions.push_back(p);
    } else if (key == "mic") {
      Eigen::Vector3d p;
      vs >> p(0) >> p(1) >> p(2);
      sc.room.mic_positions.push_back(p);
    } else if (key == "sources") {
      vs >> sc.n_sources;
    } else if (key == "channels") {
      vs >> sc.n_channels;
    } else if (key == "duration") {
      vs >> sc.duration_s;
    } else if (key == "bases") {
      vs >> sc.bases;
    } else if (key == "seed") {
      vs >> sc.seed;
    } else if (key == "mixing") {
      vs >> sc.mixing;
    } else if (key == "frame_length") {
      vs >> sc.frame_length;
    } else if (key == "frame_shift") {
      vs >> sc.frame_shift;
    } else {
      throw UnsupportedFormat("unknown scenario key: " + key);
    }
    if (vs.fail()) throw UnsupportedFormat("bad scenario value for " + key);
  }
  if (sc.type != "convolutive" && sc.type != "instantaneous") {
    throw UnsupportedFormat("scenario type must be convolutive|instantaneous");
  }
  if (sc.type == "convolutive") {
    sc.n_sources = static_cast<int>(sc.room.source_positions.size());
    sc.n_channels = static_cast<int>(sc.room.mic_positions.size());
  }
  return sc;
}

// Well-conditioned random mixing matrix. Broadcast (frequency-constant)
// matrices are kept real so the mixture is a true time-domain instantaneous
// mix; per-frequency draws are complex.
CMat random_mixing_matrix(int channels, int sources, std::mt19937_64& rng,
                          bool complex_entries) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (int attempt = 0; attempt < 100; ++attempt) {
    CMat a(channels, sources);
    for (int m = 0; m < channels; ++m) {
      for (int n = 0; n < sources; ++n) {
        a(m, n) = complex_entries ? cplx(g(rng), g(rng)) : cplx(g(rng), 0.0);
      }
    }
    Eigen::JacobiSVD<CMat> svd(a);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (smin > 0.0 && smax / smin < 10.0) return a;
  }
  throw IllConditionedMixing("could not draw a well-conditioned mixing");
}

struct MixOutput {
  MultichannelWaveform mixture;
  std::vector<Vec> sources;            // clean mono sources
  std::vector<Vec> reference_images;   // per source, at the reference mic
  GroundTruth truth;
  double measured_t60 = 0.0;
};

MixOutput build_mixture(const Scenario& sc,
                        const std::vector<Vec>& input_sources,
                        std::uint64_t seed) {
  MixOutput out;
  const int fs = sc.room.sample_rate;

  std::vector<Vec> sources = input_sources;
  if (sources.empty()) {
    SynthSources synth = synth_test_sources(sc.n_sources, sc.duration_s, fs,
                                            sc.bases, seed, sc.frame_length,
                                            sc.frame_shift);
    sources = synth.sources;
    out.truth.gen_W = std::move(synth.W);
    out.truth.gen_H = std::move(synth.H);
  }
  out.sources = sources;

  if (sc.type == "instantaneous") {
    std::mt19937_64 rng(seed ^ 0xabcdef12345ull);
    std::vector<CMat> mixing;
    if (sc.mixing == "random_per_freq") {
      const int freq_bins = sc.frame_length / 2 + 1;
      for (int i = 0; i < freq_bins; ++i) {
        mixing.push_back(
            random_mixing_matrix(sc.n_channels, sc.n_sources, rng, true));
      }
    } else {
      mixing.push_back(
          random_mixing_matrix(sc.n_channels, sc.n_sources, rng, false));
    }
    auto [mixture, truth] = instantaneous_mix(sources, mixing, fs,
                                              sc.frame_length, sc.frame_shift);
    out.mixture = std::move(mixture);
    out.truth.sources = truth.sources;
    out.truth.mixing = truth.mixing;
    // Reference image of source n: mix with the other sources muted.
    for (size_t n = 0; n < sources.size(); ++n) {
      std::vector<Vec> solo(sources.size(),
                            Vec::Zero(sources.front().size()));
      solo[n] = sources[n];
      auto [img, img_truth] = instantaneous_mix(solo, out.truth.mixing, fs,
                                                sc.frame_length,
                                                sc.frame_shift);
      out.reference_images.push_back(img.samples.col(0));
    }
  } else {
    out.truth.rirs = image_source_rir(sc.room);
    out.truth.sources = sources;
    out.mixture = convolve_mix(sources, out.truth.rirs, fs);
    for (size_t n = 0; n < sources.size(); ++n) {
      const Vec img = fft_convolve(sources[n], out.truth.rirs[n][0]);
      out.reference_images.push_back(img.head(sources[n].size()));
    }
    if (sc.room.rt60 > 0.0) {
      out.measured_t60 = schroeder_t60(out.truth.rirs[0][0], fs);
    }
  }
  return out;
}

struct MixArgs {
  std::string scenario;
  std::vector<std::string> sources;  // wav paths or the literal "synthetic"
  std::string out = ".";
  std::uint64_t seed = 0;
};

int cmd_mix(const MixArgs& args) {
  Scenario sc;
  try {
    sc = parse_scenario(args.scenario);
  } catch (const std::exception& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return kExitUsage;
  }
  std::uint64_t seed = resolve_seed(args.seed != 0 ? args.seed : sc.seed);

  std::vector<Vec> input_sources;
  const bool synthetic =
      args.sources.size() == 1 && args.sources.front() == "synthetic";
  if (!synthetic) {
    long min_len = std::numeric_limits<long>::max();
    for (const auto& p : args.sources) {
      input_sources.push_back(load_mono(p));
      min_len = std::min(min_len, input_sources.back().size());
    }
    for (auto& v : input_sources) v.conservativeResize(min_len);
    const int expect = sc.type == "convolutive"
                           ? static_cast<int>(sc.room.source_positions.size())
                           : sc.n_sources;
    if (static_cast<int>(input_sources.size()) != expect) {
      std::cerr << "scenario expects " << expect << " sources, got "
                << input_sources.size() << "\n";
      return kExitUsage;
    }
  }

  MixOutput mix;
  try {
    mix = build_mixture(sc, input_sources, seed);
  } catch (const std::exception& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return kExitUsage;
  }

  fs::create_directories(args.out);
  json manifest;
  manifest["command"] = "mix";
  manifest["toolkit_version"] = kVersion;
  manifest["seed"] = seed;
  manifest["scenario_file"] = args.scenario;
  manifest["type"] = sc.type;
  manifest["sample_rate"] = sc.room.sample_rate;
  manifest["sources"] = synthetic ? std::vector<std::string>{"synthetic"}
                                  : args.sources;

  write_wav((fs::path(args.out) / "mixture.wav").string(), mix.mixture, 32);
  json outputs = json::array();
  outputs.push_back((fs::path(args.out) / "mixture.wav").string());
  for (size_t n = 0; n < mix.sources.size(); ++n) {
    MultichannelWaveform w;
    w.sample_rate = sc.room.sample_rate;
    w.samples = mix.sources[n];
    std::ostringstream name;
    name << "source_" << n + 1 << ".wav";
    write_wav((fs::path(args.out) / name.str()).string(), w, 32);
    outputs.push_back((fs::path(args.out) / name.str()).string());

    MultichannelWaveform img;
    img.sample_rate = sc.room.sample_rate;
    img.samples = mix.reference_images[n];
    std::ostringstream img_name;
    img_name << "image_" << n + 1 << ".wav";
    write_wav((fs::path(args.out) / img_name.str()).string(), img, 32);
    outputs.push_back((fs::path(args.out) / img_name.str()).string());
  }
  manifest["outputs"] = outputs;

  if (sc.type == "convolutive") {
    manifest["room"] = {sc.room.room_dims(0), sc.room.room_dims(1),
                        sc.room.room_dims(2)};
    manifest["rt60_requested"] = sc.room.rt60;
    if (sc.room.rt60 > 0.0) manifest["rt60_measured"] = mix.measured_t60;
  } else if (mix.truth.mixing.size() == 1) {
    json a = json::array();
    const CMat& m = mix.truth.mixing.front();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        row.push_back({m(r, c).real(), m(r, c).imag()});
      }
      a.push_back(row);
    }
    manifest["mixing_matrix"] = a;
  }
  write_text(fs::path(args.out) / "manifest.json", manifest.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string suite = "default";
  std::vector<std::uint64_t> seeds = {1, 2};
  std::vector<std::string> methods = {"auxiva", "mnmf", "ilrma", "m-mnmf",
                                      "m-ilrma"};
  std::string out = "bench_out";
  int jobs = 0;
};

struct BenchScenario {
  std::string name;
  Scenario scenario;
  int iterations = 100;
};

std::vector<BenchScenario> suite_scenarios(const std::string& suite) {
  Scenario inst;
  inst.type = "instantaneous";
  inst.n_sources = 2;
  inst.n_channels = 2;
  inst.duration_s = 2.0;

  Scenario conv;
  conv.type = "convolutive";
  conv.room.rt60 = 0.13;
  conv.room.source_positions = {{1.586, 4.414, 1.5}, {4.414, 4.414, 1.5}};
  conv.room.mic_positions = {{2.9717, 3.0, 1.5}, {3.0283, 3.0, 1.5}};
  conv.duration_s = 2.0;

  if (suite == "default") {
    return {{"instantaneous", inst, 100}, {"convolutive_rt60_0.13", conv, 100}};
  }
  if (suite == "quick") {
    inst.duration_s = 1.0;
    return {{"instantaneous", inst, 25}};
  }
  throw UnsupportedFormat("unknown suite: " + suite);
}

struct BenchRow {
  std::string scenario, method, status;
  std::uint64_t seed = 0;
  int source = 0;
  double sdr = 0, sir = 0, sdri = 0, siri = 0, runtime = 0;
};

int cmd_bench(const BenchArgs& args) {
  std::vector<BenchScenario> scenarios;
  try {
    scenarios = suite_scenarios(args.suite);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }
  fs::create_directories(args.out);
  fs::create_directories(fs::path(args.out) / "traces");

  struct Task {
    const BenchScenario* scenario;
    std::string method;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& sc : scenarios) {
    for (const auto& method : args.methods) {
      for (std::uint64_t seed : args.seeds) {
        tasks.push_back({&sc, method, seed});
      }
    }
  }

  std::mutex rows_mutex;
  std::vector<BenchRow> rows;
  std::atomic<size_t> next{0};
  std::atomic<int> failures{0};

  auto worker = [&]() {
    while (true) {
      const size_t idx = next.fetch_add(1);
      if (idx >= tasks.size()) return;
      const Task& task = tasks[idx];
      const std::uint64_t scene_seed =
          fnv1a(task.scenario->name.data(), task.scenario->name.size(),
                task.seed);
      BenchRow base;
      base.scenario = task.scenario->name;
      base.method = task.method;
      base.seed = task.seed;
      try {
        MixOutput mix = build_mixture(task.scenario->scenario, {}, scene_seed);

        SeparatorConfig cfg;
        cfg.method = method_from_string(task.method);
        cfg.n_sources = task.scenario->scenario.n_sources;
        cfg.max_iterations = task.scenario->iterations;
        cfg.seed = task.seed;
        cfg.frame_length = task.scenario->scenario.frame_length;
        cfg.frame_shift = task.scenario->scenario.frame_shift;

        const auto spec = stft(mix.mixture, cfg.frame_length, cfg.frame_shift);
        const SeparationRun run = separate(spec, cfg);

        std::vector<Vec> est;
        long min_len = mix.reference_images.front().size();
        for (const auto& w : run.separated) {
          min_len = std::min(min_len, w.length());
        }
        for (const auto& w : run.separated) {
          Vec v = w.samples.col(0);
          v.conservativeResize(min_len);
          est.push_back(std::move(v));
        }
        std::vector<Vec> refs;
        for (const auto& img : mix.reference_images) {
          Vec v = img;
          v.conservativeResize(min_len);
          refs.push_back(std::move(v));
        }
        Vec mix_ref = mix.mixture.samples.col(0);
        mix_ref.conservativeResize(min_len);
        const EvalReport report = align_permutation(est, refs, mix_ref);

        std::ostringstream trace_name;
        trace_name << task.scenario->name << "_" << task.method << "_seed"
                   << task.seed << ".csv";
        write_text(fs::path(args.out) / "traces" / trace_name.str(),
                   trace_csv(run.objective_trace));

        std::lock_guard<std::mutex> lock(rows_mutex);
        for (size_t r = 0; r < refs.size(); ++r) {
          BenchRow row = base;
          row.status = "ok";
          row.source = static_cast<int>(r) + 1;
          row.sdr = report.sdr[r];
          row.sir = report.sir[r];
          row.sdri = report.sdr_improvement[r];
          row.siri = report.sir_improvement[r];
          row.runtime = run.wall_time_s;
          rows.push_back(row);
        }
      } catch (const std::exception& e) {
        failures.fetch_add(1);
        std::lock_guard<std::mutex> lock(rows_mutex);
        BenchRow row = base;
        row.status = std::string("failed: ") + e.what();
        rows.push_back(row);
      }
    }
  };

  const int jobs = args.jobs > 0
                       ? args.jobs
                       : std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::sort(rows.begin(), rows.end(), [](const BenchRow& a, const BenchRow& b) {
    return std::tie(a.scenario, a.method, a.seed, a.source) <
           std::tie(b.scenario, b.method, b.seed, b.source);
  });

  std::ostringstream csv;
  csv << "scenario,method,seed,source,sdr_db,sir_db,sdri_db,siri_db,"
         "runtime_s,status\n";
  for (const auto& r : rows) {
    csv << r.scenario << "," << r.method << "," << r.seed << "," << r.source
        << "," << format_double(r.sdr) << "," << format_double(r.sir) << ","
        << format_double(r.sdri) << "," << format_double(r.siri) << ","
        << format_double(r.runtime) << "," << r.status << "\n";
  }
  write_text(fs::path(args.out) / "results.csv", csv.str());

  auto aggregate = [&](const std::string& scenario, const std::string& method,
                       auto select) {
    std::vector<double> vals;
    for (const auto& r : rows) {
      if (r.scenario == scenario && r.method == method && r.status == "ok") {
        vals.push_back(select(r));
      }
    }
    double mean = 0.0, median = 0.0;
    if (!vals.empty()) {
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      std::sort(vals.begin(), vals.end());
      median = vals[vals.size() / 2];
      if (vals.size() % 2 == 0) {
        median = 0.5 * (median + vals[vals.size() / 2 - 1]);
      }
    }
    return std::make_pair(mean, median);
  };

  std::ostringstream summary;
  summary << "scenario,method,n_sources_ok,mean_sdri_db,median_sdri_db,"
             "mean_siri_db,median_siri_db\n";
  for (const auto& sc : scenarios) {
    for (const auto& method : args.methods) {
      size_t n_ok = 0;
      for (const auto& r : rows) {
        if (r.scenario == sc.name && r.method == method && r.status == "ok") {
          ++n_ok;
        }
      }
      const auto sdri = aggregate(sc.name, method,
                                  [](const BenchRow& r) { return r.sdri; });
      const auto siri = aggregate(sc.name, method,
                                  [](const BenchRow& r) { return r.siri; });
      summary << sc.name << "," << method << "," << n_ok << ","
              << format_double(sdri.first) << "," << format_double(sdri.second)
              << "," << format_double(siri.first) << ","
              << format_double(siri.second) << "\n";
    }
  }
  write_text(fs::path(args.out) / "summary.csv", summary.str());

  json manifest;
  manifest["command"] = "bench";
  manifest["toolkit_version"] = kVersion;
  manifest["suite"] = args.suite;
  manifest["seeds"] = args.seeds;
  manifest["methods"] = args.methods;
  manifest["jobs"] = jobs;
  manifest["tasks"] = tasks.size();
  manifest["failures"] = failures.load();
  write_text(fs::path(args.out) / "manifest.json", manifest.dump(2) + "\n");

  const double ok_fraction =
      tasks.empty() ? 1.0
                    : 1.0 - static_cast<double>(failures.load()) /
                                static_cast<double>(tasks.size());
  return ok_fraction >= 0.9 ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mvbss — multichannel blind source separation toolkit"};
  app.require_subcommand(1);

  SeparateArgs sep;
  CLI::App* separate_cmd =
      app.add_subcommand("separate", "Separate a multichannel mixture");
  separate_cmd->add_option("--input", sep.input, "Input WAV")->required();
  separate_cmd->add_option("--method", sep.method,
                           "auxiva|mnmf|ilrma|m-mnmf|m-ilrma");
  separate_cmd->add_option("--sources", sep.sources, "Number of sources")
      ->required();
  separate_cmd->add_option("--bases", sep.bases, "NMF bases K");
  separate_cmd->add_option("--iters", sep.iters, "Iterations");
  separate_cmd->add_option("--eta", sep.eta, "MinVol shift eta");
  separate_cmd->add_option("--gamma", sep.gamma, "Initial MinVol weight");
  separate_cmd->add_option("--seed", sep.seed, "RNG seed");
  separate_cmd->add_option("--out", sep.out, "Output directory");
  separate_cmd->add_flag("--trace", sep.trace, "Write objective trace CSV");

  EvaluateArgs ev;
  CLI::App* evaluate_cmd =
      app.add_subcommand("evaluate", "Score separated sources");
  evaluate_cmd->add_option("--est", ev.est, "Estimated WAVs")->required();
  evaluate_cmd->add_option("--ref", ev.ref, "Reference WAVs")->required();
  evaluate_cmd->add_option("--mix", ev.mix,
                           "Mixture WAV for improvement deltas");
  evaluate_cmd->add_option("--metrics", ev.metrics, "Comma-separated metrics");
  evaluate_cmd->add_option("--model", ev.model, "Saved model.json");
  evaluate_cmd->add_option("--manifest", ev.manifest,
                           "Manifest from separate");
  evaluate_cmd->add_option("--out", ev.out, "CSV output path (default stdout)");

  MixArgs mx;
  CLI::App* mix_cmd = app.add_subcommand("mix", "Generate a test mixture");
  mix_cmd->add_option("--scenario", mx.scenario, "Scenario config file")
      ->required();
  mix_cmd->add_option("--sources", mx.sources,
                      "Source WAVs or the literal 'synthetic'")
      ->required();
  mix_cmd->add_option("--out", mx.out, "Output directory");
  mix_cmd->add_option("--seed", mx.seed, "RNG seed");

  BenchArgs bn;
  CLI::App* bench_cmd =
      app.add_subcommand("bench", "Run a scenario x method x seed grid");
  bench_cmd->add_option("--suite", bn.suite, "default|quick");
  bench_cmd->add_option("--seeds", bn.seeds, "Seeds");
  bench_cmd->add_option("--methods", bn.methods, "Methods");
  bench_cmd->add_option("--out", bn.out, "Output directory")->required();
  bench_cmd->add_option("--jobs", bn.jobs, "Worker count (default: cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_name() == "CallForHelp" ? kExitOk : kExitUsage;
  }

  try {
    if (separate_cmd->parsed()) return cmd_separate(sep);
    if (evaluate_cmd->parsed()) return cmd_evaluate(ev);
    if (mix_cmd->parsed()) return cmd_mix(mx);
    if (bench_cmd->parsed()) return cmd_bench(bn);
  } catch (const CountMismatch& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalBreakdown& e) {
    std::cerr << "numerical breakdown: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
