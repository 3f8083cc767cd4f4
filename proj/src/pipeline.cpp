#include "gridfuse/pipeline.hpp"

#include "gridfuse/error.hpp"
#include "gridfuse/serialization.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace gridfuse {

namespace fs = std::filesystem;

namespace {

// Fixed-capacity hand-off between the grid renderer and the fusion loop.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct GridItem {
  std::optional<RenderedGrid> grid;
  std::exception_ptr error;
};

std::vector<double> sample_times(double period, double end, std::size_t limit) {
  std::vector<double> out;
  for (std::size_t k = 0; out.size() < limit; ++k) {
    const double t = static_cast<double>(k) * period;
    if (t > end + 1e-9) break;
    out.push_back(t);
  }
  return out;
}

Pose2 inverse(const Pose2& p) { return relative(p, Pose2{}); }

std::string num(double x) { return fmt::format("{:.6f}", x); }

struct Artifacts {
  std::ofstream frames;
  std::ofstream confidence;
  std::ofstream metas_csv;
  std::ofstream truth_csv;
  std::ofstream ego_csv;
  std::ofstream counts_csv;
  fs::path dir;

  explicit Artifacts(const fs::path& out) : dir(out) {
    fs::create_directories(out / "plot");
    auto open = [](std::ofstream& f, const fs::path& p) {
      f.open(p, std::ios::binary);
      if (!f) throw ConfigError("cannot write " + p.string());
    };
    open(frames, out / "frames.jsonl");
    open(confidence, out / "confidence.jsonl");
    open(metas_csv, out / "plot" / "metas.csv");
    open(truth_csv, out / "plot" / "truth.csv");
    open(ego_csv, out / "plot" / "ego.csv");
    open(counts_csv, out / "plot" / "frame_counts.csv");
    metas_csv << "timestamp,label,class,x,y,v,phi,length,width,eta\n";
    truth_csv << "timestamp,id,kind,class,x,y,speed,phi,visible_fraction\n";
    ego_csv << "timestamp,x_est,y_est,phi_est,x_true,y_true,phi_true\n";
    counts_csv << "timestamp,truth,matched,missed,false\n";
  }
};

void check_result(const EnvelopeResult& r, const FusionConfig& cfg) {
  for (const auto& rec : r.records) {
    if (rec.eta != combined_confidence(rec.eta_p, rec.eta_e, rec.eta_m)) {
      throw InvariantViolation(
          fmt::format("confidence of {} label {} is not the product of its factors",
                      to_string(rec.module), rec.source_label));
    }
    if (rec.action != Action::rejected && rec.eta < cfg.eta_min) {
      throw InvariantViolation(fmt::format(
          "{} label {} accepted with eta {} below eta_min", to_string(rec.module),
          rec.source_label, rec.eta));
    }
  }
}

}  // namespace

std::string default_config_path() {
  return (fs::path(GRIDFUSE_DATA_DIR) / "config" / "defaults.json").string();
}

PipelineConfig resolve_config(const RunOptions& opts) {
  const std::string path = opts.config_path.empty() ? default_config_path()
                                                     : opts.config_path;
  return with_overrides(load_config_file(path), opts.overrides);
}

RunSummary run_scenario(const RunOptions& opts, const RunHooks& hooks) {
  const PipelineConfig cfg = resolve_config(opts);
  ScenarioSpec spec = load_scenario(resolve_scenario_path(opts.scenario));
  if (opts.seed) spec.seed = *opts.seed;
  const SimWorld world(std::move(spec), cfg.map);
  return run_world(world, cfg, opts, hooks);
}

RunSummary run_world(const SimWorld& world, const PipelineConfig& cfg,
                     const RunOptions& opts, const RunHooks& hooks) {
  const ScenarioSpec& spec = world.spec;
  const std::size_t limit = opts.frames.value_or(static_cast<std::size_t>(-1));
  const std::vector<double> grid_times =
      sample_times(spec.grid.period, spec.duration, limit);
  const double end = grid_times.empty() ? 0.0 : grid_times.back();
  const std::vector<double> track_times =
      grid_times.empty() ? std::vector<double>{}
                         : sample_times(spec.tracker.period, end, static_cast<std::size_t>(-1));
  spdlog::info("scenario {}: {} grid frames, {} track frames", spec.name,
               grid_times.size(), track_times.size());

  std::optional<Artifacts> out;
  if (!opts.out_dir.empty()) out.emplace(opts.out_dir);

  FusionEngine engine(cfg.fusion, world.map_ego);
  GridExtractor extractor(cfg.extraction);
  TrackSource tracks(world);
  EgoMotionEstimator ego(cfg.ego, 0.0, spec.ego.start.v);
  const std::vector<ImuSample> imu = imu_stream(spec);
  std::size_t imu_next = 0;

  FusionEvaluator fusion_eval(world, tracks.false_labels(), cfg.fusion);
  ExtractionEvaluator extraction_eval;
  RunSummary summary;
  summary.false_labels = tracks.false_labels();

  BoundedQueue<GridItem> queue(4);
  std::thread producer([&] {
    for (double t : grid_times) {
      GridItem item;
      try {
        item.grid = render_dogma_frame(world, t);
      } catch (...) {
        item.error = std::current_exception();
      }
      const bool failed = item.error != nullptr;
      if (!queue.push(std::move(item)) || failed) break;
    }
    queue.close();
  });
  struct Joiner {
    BoundedQueue<GridItem>& q;
    std::thread& th;
    ~Joiner() {
      q.close();
      if (th.joinable()) th.join();
    }
  } joiner{queue, producer};

  auto handle_results = [&](const std::vector<EnvelopeResult>& results) {
    for (const auto& r : results) {
      check_result(r, cfg.fusion);
      const TruthFrame truth = truth_at(world, r.timestamp);
      fusion_eval.add(r, truth);
      if (hooks.on_result) hooks.on_result(r, truth);
      if (out) {
        json line{{"frame", summary.envelopes},
                  {"envelope", r.envelope},
                  {"timestamp", r.timestamp},
                  {"module", std::string(to_string(r.module))},
                  {"metas", json::array()},
                  {"records", json::array()}};
        for (const auto& m : r.metas) {
          line["metas"].push_back(meta_to_json(m));
          out->metas_csv << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", num(r.timestamp),
                                        m.label, to_string(m.cls), num(m.ref_pos.x()),
                                        num(m.ref_pos.y()), num(m.v), num(m.phi),
                                        num(m.bbox.length), num(m.bbox.width),
                                        num(m.eta));
        }
        for (const auto& rec : r.records) {
          line["records"].push_back(record_to_json(rec));
          out->confidence << record_to_json(rec).dump() << '\n';
        }
        out->frames << line.dump() << '\n';
        const FrameCounts fc = fusion_eval.report().frames.back();
        out->counts_csv << fmt::format("{},{},{},{},{}\n", num(r.timestamp), fc.truth,
                                       fc.matched, fc.missed, fc.false_count);
      }
      ++summary.envelopes;
    }
  };

  std::size_t gi = 0;
  std::size_t ti = 0;
  while (gi < grid_times.size() || ti < track_times.size()) {
    const bool grid_event =
        ti >= track_times.size() ||
        (gi < grid_times.size() && grid_times[gi] <= track_times[ti]);
    const double t = grid_event ? grid_times[gi] : track_times[ti];
    while (imu_next < imu.size() && imu[imu_next].timestamp <= t + 1e-12) {
      ego.ingest(imu[imu_next++]);
    }
    const Pose2 pose = ego.state_at(t).pose();

    SampleEnvelope env;
    env.timestamp = t;
    env.ego_pose = pose;
    if (grid_event) {
      std::optional<GridItem> item = queue.pop();
      if (!item) throw InvariantViolation("grid renderer stopped early");
      if (item->error) std::rethrow_exception(item->error);
      const RenderedGrid& rg = *item->grid;
      env.module = Module::grid;
      env.grid = extractor.process(rg.frame, pose);
      std::vector<GridObject> local;
      const Pose2 inv = inverse(pose);
      for (const auto& o : env.grid) local.push_back(transform_object(o, inv));
      extraction_eval.add(local, rg.truth);
      if (hooks.on_grid) hooks.on_grid(local, rg);
      if (out) {
        const Pose2 truth_pose = rg.truth.ego;
        out->ego_csv << fmt::format("{},{},{},{},{},{},{}\n", num(t), num(pose.x),
                                    num(pose.y), num(pose.phi), num(truth_pose.x),
                                    num(truth_pose.y), num(truth_pose.phi));
        for (const auto& o : rg.truth.objects) {
          out->truth_csv << fmt::format(
              "{},{},{},{},{},{},{},{},{}\n", num(t), o.id, to_string(o.kind),
              to_string(o.cls), num(o.box_world.center.x()), num(o.box_world.center.y()),
              num(o.speed), num(o.heading_world), num(o.visible_fraction));
        }
      }
      ++summary.grid_frames;
      ++gi;
    } else {
      env.module = Module::tracker;
      for (const auto& tr : tracks.next(t)) env.tracks.push_back(transform_track(tr, pose));
      ++summary.track_frames;
      ++ti;
    }
    engine.enqueue(std::move(env));
    handle_results(engine.process_until(t));
  }
  handle_results(engine.drain());

  summary.eval = fusion_eval.report();
  summary.extraction = extraction_eval.report();

  if (out) {
    std::ofstream metrics(out->dir / "metrics.csv", std::ios::binary);
    if (!metrics) throw ConfigError("cannot write metrics.csv");
    const EvalReport& e = summary.eval;
    const ExtractionReport& x = summary.extraction;
    metrics << "metric,value\n"
            << "grid_frames," << summary.grid_frames << '\n'
            << "track_frames," << summary.track_frames << '\n'
            << "envelopes," << summary.envelopes << '\n'
            << "matched," << e.matched << '\n'
            << "missed," << e.missed << '\n'
            << "false," << e.false_count << '\n'
            << "rmse," << num(e.rmse) << '\n'
            << "label_switches," << e.label_switches << '\n'
            << "metas_created," << e.metas_created << '\n'
            << "rejected," << e.rejected << '\n'
            << "false_presented," << e.false_presented << '\n'
            << "false_accepted," << e.false_accepted << '\n'
            << "ghost_presented," << e.ghost_presented << '\n'
            << "ghost_accepted," << e.ghost_accepted << '\n'
            << "extraction_worst_recall," << num(x.worst_recall()) << '\n'
            << "extraction_rmse," << num(x.rmse) << '\n'
            << "extraction_false_objects," << x.false_objects << '\n'
            << "extraction_label_switches," << x.label_switches << '\n';
  }
  return summary;
}

void export_streams(const RunOptions& opts, CellEncoding encoding) {
  const PipelineConfig cfg = resolve_config(opts);
  ScenarioSpec spec = load_scenario(resolve_scenario_path(opts.scenario));
  if (opts.seed) spec.seed = *opts.seed;
  const SimWorld world(std::move(spec), cfg.map);
  const fs::path dir(opts.out_dir);
  fs::create_directories(dir);
  std::ofstream dogma(dir / "dogma.jsonl", std::ios::binary);
  std::ofstream track_out(dir / "tracks.jsonl", std::ios::binary);
  std::ofstream imu_out(dir / "imu.jsonl", std::ios::binary);
  std::ofstream truth_out(dir / "truth.jsonl", std::ios::binary);
  if (!dogma || !track_out || !imu_out || !truth_out) {
    throw ConfigError("cannot write into " + dir.string());
  }
  const std::size_t limit = opts.frames.value_or(static_cast<std::size_t>(-1));
  const auto grid_times = sample_times(world.spec.grid.period, world.spec.duration, limit);
  const double end = grid_times.empty() ? 0.0 : grid_times.back();
  for (double t : grid_times) {
    const RenderedGrid rg = render_dogma_frame(world, t);
    dogma << dogma_frame_to_json(rg.frame, encoding).dump() << '\n';
    json tj{{"type", "truth"}, {"timestamp", t},
            {"ego_pose", {rg.truth.ego.x, rg.truth.ego.y, rg.truth.ego.phi}},
            {"objects", json::array()}};
    for (const auto& o : rg.truth.objects) {
      tj["objects"].push_back({{"id", o.id},
                               {"kind", std::string(to_string(o.kind))},
                               {"class", std::string(to_string(o.cls))},
                               {"box", box_to_json(o.box_world)},
                               {"speed", o.speed},
                               {"visible_fraction", o.visible_fraction},
                               {"cell_count", o.cell_count},
                               {"clipped", o.clipped}});
    }
    truth_out << tj.dump() << '\n';
  }
  TrackSource tracks(world);
  if (!grid_times.empty()) {
    for (double t : sample_times(world.spec.tracker.period, end, static_cast<std::size_t>(-1))) {
      json tj{{"type", "tracks"}, {"timestamp", t}, {"tracks", json::array()}};
      for (const auto& tr : tracks.next(t)) tj["tracks"].push_back(track_to_json(tr));
      track_out << tj.dump() << '\n';
    }
  }
  for (const auto& s : imu_stream(world.spec)) {
    if (s.timestamp > end + 1e-9) break;
    imu_out << imu_to_json(s).dump() << '\n';
  }
}

// ------------------------------------------------------------------ inspect

namespace {

using Row = std::vector<std::pair<std::string, json>>;

const std::vector<std::string> kColumns = {
    "kind",     "frame",    "timestamp", "label",        "module",
    "source_label", "class", "x",        "y",            "ref_label",
    "v",        "phi",      "length",    "width",        "eta",
    "eta_p",    "eta_e",    "eta_m",     "confirmation", "action",
    "meta_label", "reason", "grid_label", "track_label"};

std::vector<Row> flatten(const json& frame) {
  std::vector<Row> rows;
  const json& f = frame.at("frame");
  const json& ts = frame.at("timestamp");
  for (const auto& m : frame.at("metas")) {
    rows.push_back({{"kind", "meta"},
                    {"frame", f},
                    {"timestamp", ts},
                    {"label", m.at("label")},
                    {"class", m.at("class")},
                    {"x", m.at("ref_pos").at(0)},
                    {"y", m.at("ref_pos").at(1)},
                    {"ref_label", m.at("ref_label")},
                    {"v", m.at("v")},
                    {"phi", m.at("phi")},
                    {"length", m.at("bbox").at("length")},
                    {"width", m.at("bbox").at("width")},
                    {"eta", m.at("eta")},
                    {"grid_label", m.at("grid_label")},
                    {"track_label", m.at("track_label")}});
  }
  for (const auto& r : frame.at("records")) {
    rows.push_back({{"kind", "record"},
                    {"frame", f},
                    {"timestamp", ts},
                    {"module", r.at("module")},
                    {"source_label", r.at("source_label")},
                    {"x", r.at("position").at(0)},
                    {"y", r.at("position").at(1)},
                    {"eta", r.at("eta")},
                    {"eta_p", r.at("eta_p")},
                    {"eta_e", r.at("eta_e")},
                    {"eta_m", r.at("eta_m")},
                    {"confirmation", r.at("confirmation")},
                    {"action", r.at("action")},
                    {"meta_label", r.at("meta_label")},
                    {"reason", r.at("reason")}});
  }
  return rows;
}

std::string csv_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    return quoted + "\"";
  }
  return v.dump();
}

std::string fmt_num(const json& v, int digits = 3) {
  if (v.is_null()) return "-";
  return fmt::format("{:.{}f}", v.get<double>(), digits);
}

}  // namespace

std::string inspect_frame(const std::string& frames_path, std::size_t index,
                          DumpFormat format) {
  std::ifstream in(frames_path);
  if (!in) throw ConfigError("frame log not found: " + frames_path);
  std::string line;
  std::size_t n = 0;
  std::optional<json> frame;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (n++ == index) {
      try {
        frame = json::parse(line);
      } catch (const json::exception& e) {
        throw ParseError(fmt::format("frame {}: {}", index, e.what()));
      }
      break;
    }
  }
  if (!frame) {
    throw InvalidArgument(
        fmt::format("frame index {} out of range ({} frames)", index, n));
  }

  std::ostringstream os;
  if (format == DumpFormat::text) {
    const json& f = *frame;
    os << fmt::format("frame {}  t={:.3f}  module={}\n", f.at("frame").get<std::size_t>(),
                      f.at("timestamp").get<double>(), f.at("module").get<std::string>());
    const auto& metas = f.at("metas");
    os << metas.size() << " objects\n";
    for (const auto& m : metas) {
      os << fmt::format("  meta {}  class={}  pos=({}, {})  v={}  phi={}  eta={}\n",
                        m.at("label").get<Label>(), m.at("class").get<std::string>(),
                        fmt_num(m.at("ref_pos").at(0), 2), fmt_num(m.at("ref_pos").at(1), 2),
                        fmt_num(m.at("v"), 2), fmt_num(m.at("phi")), fmt_num(m.at("eta")));
    }
    const auto& records = f.at("records");
    os << records.size() << " candidates\n";
    for (const auto& r : records) {
      os << fmt::format(
          "  {} {}  action={}  eta={}  eta_p={}  eta_e={}  eta_m={}  confirmation={}",
          r.at("module").get<std::string>(), r.at("source_label").get<Label>(),
          r.at("action").get<std::string>(), fmt_num(r.at("eta")), fmt_num(r.at("eta_p")),
          fmt_num(r.at("eta_e")), fmt_num(r.at("eta_m")),
          r.at("confirmation").get<std::string>());
      if (!r.at("meta_label").is_null()) {
        os << "  meta=" << r.at("meta_label").get<Label>();
      }
      if (!r.at("reason").get<std::string>().empty()) {
        os << "  reason=" << r.at("reason").get<std::string>();
      }
      os << '\n';
    }
    return os.str();
  }

  const auto rows = flatten(*frame);
  if (format == DumpFormat::jsonl) {
    for (const auto& row : rows) {
      json o = json::object();
      for (const auto& [k, v] : row) o[k] = v;
      os << o.dump() << '\n';
    }
    return os.str();
  }
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    os << (c ? "," : "") << kColumns[c];
  }
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
      if (c) os << ',';
      const auto it = std::find_if(row.begin(), row.end(),
                                   [&](const auto& kv) { return kv.first == kColumns[c]; });
      if (it != row.end()) os << csv_cell(it->second);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace gridfuse
