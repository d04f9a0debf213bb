#include "s2fp8/experiment.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "s2fp8/error.hpp"

namespace s2fp8 {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

void require_file(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("config is missing ") + what);
  if (!std::filesystem::is_regular_file(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

DatasetConfig parse_dataset(const json& j, const std::filesystem::path& base) {
  if (!j.is_object()) throw ConfigError("config 'dataset' must be an object");
  DatasetConfig d;
  const auto kind = get_or<std::string>(j, "kind", "");
  if (kind == "blobs") {
    d.kind = DatasetKind::blobs;
    BlobsSpec& b = d.blobs;
    b.classes = get_or(j, "classes", b.classes);
    b.features = get_or(j, "features", b.features);
    b.train_samples = get_or(j, "train_samples", b.train_samples);
    b.val_samples = get_or(j, "val_samples", b.val_samples);
    b.separation = get_or(j, "separation", b.separation);
    b.sigma = get_or(j, "sigma", b.sigma);
  } else if (kind == "log_uniform") {
    d.kind = DatasetKind::log_uniform;
    LogUniformSpec& l = d.log_uniform;
    l.classes = get_or(j, "classes", l.classes);
    l.features = get_or(j, "features", l.features);
    l.train_samples = get_or(j, "train_samples", l.train_samples);
    l.val_samples = get_or(j, "val_samples", l.val_samples);
    l.log2_min = get_or(j, "log2_min", l.log2_min);
    l.log2_max = get_or(j, "log2_max", l.log2_max);
    l.sign_noise = get_or(j, "sign_noise", l.sign_noise);
  } else if (kind == "idx") {
    d.kind = DatasetKind::idx;
    d.train_images = resolve(base, get_or<std::string>(j, "train_images", ""));
    d.train_labels = resolve(base, get_or<std::string>(j, "train_labels", ""));
    require_file(d.train_images, "train_images");
    require_file(d.train_labels, "train_labels");
    if (j.contains("val_images") || j.contains("val_labels")) {
      d.val_images = resolve(base, get_or<std::string>(j, "val_images", ""));
      d.val_labels = resolve(base, get_or<std::string>(j, "val_labels", ""));
      require_file(d.val_images, "val_images");
      require_file(d.val_labels, "val_labels");
    }
  } else {
    throw ConfigError("dataset kind must be blobs, log_uniform or idx, got '" + kind + "'");
  }
  if (j.contains("image_shape")) {
    if (d.kind == DatasetKind::idx) throw ConfigError("image_shape applies to synthetic datasets only");
    d.image_shape = get_or<Shape>(j, "image_shape", {});
    if (d.image_shape->size() != 3) throw ConfigError("image_shape must be [H, W, C]");
  }
  return d;
}

OptimizerConfig parse_optimizer(const json& j) {
  OptimizerConfig o;
  if (j.is_null()) return o;
  if (!j.is_object()) throw ConfigError("config 'optimizer' must be an object");
  const auto kind = get_or<std::string>(j, "kind", "sgd_momentum");
  if (kind == "sgd_momentum" || kind == "sgd") {
    o.kind = OptimizerKind::sgd_momentum;
  } else if (kind == "adam") {
    o.kind = OptimizerKind::adam;
    o.learning_rate = 1e-3;
  } else {
    throw ConfigError("optimizer kind must be sgd_momentum or adam, got '" + kind + "'");
  }
  o.learning_rate = get_or(j, "learning_rate", o.learning_rate);
  o.momentum = get_or(j, "momentum", o.momentum);
  o.beta1 = get_or(j, "beta1", o.beta1);
  o.beta2 = get_or(j, "beta2", o.beta2);
  o.epsilon = get_or(j, "epsilon", o.epsilon);
  o.milestones = get_or(j, "milestones", o.milestones);
  o.gamma = get_or(j, "gamma", o.gamma);
  if (!(o.learning_rate > 0.0)) throw ConfigError("optimizer learning_rate must be positive");
  return o;
}

}  // namespace

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  if (!doc.contains("seed")) throw ConfigError("config is missing the mandatory 'seed'");
  c.seed = get_or<std::uint64_t>(doc, "seed", 0);
  if (!doc.contains("dataset")) throw ConfigError("config is missing 'dataset'");
  c.dataset = parse_dataset(doc.at("dataset"), base_dir);

  if (doc.contains("model")) {
    const json& m = doc.at("model");
    c.hidden = get_or(m, "hidden", c.hidden);
    c.bias = get_or(m, "bias", c.bias);
    if (m.contains("conv") && !m.at("conv").is_null()) {
      const json& cv = m.at("conv");
      ConvSpec spec;
      spec.filters = get_or(cv, "filters", spec.filters);
      spec.kernel = get_or(cv, "kernel", spec.kernel);
      spec.stride = get_or(cv, "stride", spec.stride);
      spec.pad = get_or(cv, "pad", spec.pad);
      c.conv = spec;
    }
  }
  c.optimizer = parse_optimizer(doc.value("optimizer", json()));

  if (doc.contains("runs")) {
    std::set<std::string> ids;
    for (const json& r : doc.at("runs")) {
      RunConfig run;
      run.quant.mode = parse_quant_mode(get_or<std::string>(r, "mode", ""));
      run.id = get_or<std::string>(r, "id", std::string(to_string(run.quant.mode)));
      run.quant.loss_scale = get_or(r, "loss_scale", run.quant.loss_scale);
      run.quant.target_max = get_or(r, "target_max", run.quant.target_max);
      run.quant.validate();
      if (!ids.insert(run.id).second) throw ConfigError("duplicate run id '" + run.id + "'");
      c.runs.push_back(run);
    }
  }
  c.epochs = get_or(doc, "epochs", c.epochs);
  c.batch_size = get_or(doc, "batch_size", c.batch_size);
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  c.tracked = get_or(doc, "tracked", c.tracked);
  if (doc.contains("checkgrad")) {
    const json& g = doc.at("checkgrad");
    c.checkgrad.samples = get_or(g, "samples", c.checkgrad.samples);
    c.checkgrad.threshold = get_or(g, "threshold", c.checkgrad.threshold);
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

SplitDataset load_dataset(const DatasetConfig& config, std::uint64_t seed) {
  SplitDataset data;
  switch (config.kind) {
    case DatasetKind::blobs: data = make_blobs(config.blobs, seed); break;
    case DatasetKind::log_uniform: data = make_log_uniform(config.log_uniform, seed); break;
    case DatasetKind::idx:
      data.train = load_idx_dataset(config.train_images, config.train_labels);
      if (!config.val_images.empty()) {
        data.val = load_idx_dataset(config.val_images, config.val_labels);
        data.val.classes = data.train.classes = std::max(data.train.classes, data.val.classes);
      }
      break;
  }
  if (config.image_shape) {
    for (Dataset* d : {&data.train, &data.val}) {
      Shape s{d->size()};
      s.insert(s.end(), config.image_shape->begin(), config.image_shape->end());
      d->inputs = d->inputs.reshaped(s);
    }
  }
  return data;
}

ModelSpec model_spec(const ExperimentConfig& config, const Dataset& data) {
  ModelSpec spec;
  spec.input_shape = data.sample_shape();
  spec.hidden = config.hidden;
  spec.classes = data.classes;
  spec.conv = config.conv;
  spec.bias = config.bias;
  return spec;
}

// ---------------------------------------------------------------------------
// Metrics files

namespace {

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_number(const std::string& field, std::size_t line) {
  if (field.empty()) return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0') {
    throw IoError("metrics.csv line " + std::to_string(line) + ": '" + field + "' is not a number");
  }
  return v;
}

constexpr const char* kFixedColumns[] = {"run_id", "step", "epoch", "loss", "accuracy", "val_accuracy", "batch_hash"};
constexpr const char* kStatColumns[] = {"mu", "m", "alpha", "beta"};

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<RunOutcome>& runs) {
  const std::vector<std::string> names = runs.empty() ? std::vector<std::string>{} : runs.front().result.tracked_names;
  for (std::size_t i = 0; i < std::size(kFixedColumns); ++i) out << (i ? "," : "") << kFixedColumns[i];
  for (const auto& n : names)
    for (const char* s : kStatColumns) out << ',' << n << '.' << s;
  out << '\n';
  for (const RunOutcome& r : runs) {
    if (r.result.tracked_names != names) throw ConfigError("runs of one experiment must track the same tensors");
    for (const RunMetrics& m : r.result.steps) {
      out << r.run.id << ',' << m.step << ',' << m.epoch << ',' << number(m.loss) << ',' << number(m.accuracy) << ','
          << (std::isnan(m.val_accuracy) ? "" : number(m.val_accuracy)) << ',' << m.batch_hash;
      for (std::size_t t = 0; t < names.size(); ++t) {
        if (t < m.tracked.size()) {
          const S2Stats& s = m.tracked[t];
          out << ',' << number(s.mu) << ',' << number(s.m) << ',' << number(s.alpha) << ',' << number(s.beta);
        } else {
          out << ",,,,";
        }
      }
      out << '\n';
    }
  }
}

MetricsTable read_metrics_csv(std::istream& in) {
  MetricsTable table;
  std::string line;
  if (!std::getline(in, line)) throw IoError("metrics.csv is empty");
  const std::vector<std::string> header = split_csv(line);
  const std::size_t fixed = std::size(kFixedColumns);
  if (header.size() < fixed || (header.size() - fixed) % 4 != 0) throw IoError("metrics.csv header has a bad column count");
  for (std::size_t i = 0; i < fixed; ++i) {
    if (header[i] != kFixedColumns[i]) throw IoError("metrics.csv column " + std::to_string(i) + " should be " + kFixedColumns[i]);
  }
  for (std::size_t i = fixed; i < header.size(); i += 4) {
    const std::string& first = header[i];
    const std::string name = first.substr(0, first.rfind('.'));
    for (std::size_t k = 0; k < 4; ++k) {
      if (header[i + k] != name + "." + kStatColumns[k]) throw IoError("metrics.csv has a malformed stats column " + header[i + k]);
    }
    table.tracked_names.push_back(name);
  }

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv(line);
    if (f.size() != header.size()) throw IoError("metrics.csv line " + std::to_string(lineno) + " has the wrong column count");
    MetricsRow row;
    row.run_id = f[0];
    row.metrics.step = static_cast<std::size_t>(parse_number(f[1], lineno));
    row.metrics.epoch = static_cast<std::size_t>(parse_number(f[2], lineno));
    row.metrics.loss = parse_number(f[3], lineno);
    row.metrics.accuracy = parse_number(f[4], lineno);
    row.metrics.val_accuracy = parse_number(f[5], lineno);
    row.metrics.batch_hash = std::stoull(f[6]);
    for (std::size_t i = fixed; i < f.size(); i += 4) {
      if (f[i].empty()) break;
      S2Stats s;
      s.mu = parse_number(f[i], lineno);
      s.m = parse_number(f[i + 1], lineno);
      s.alpha = parse_number(f[i + 2], lineno);
      s.beta = parse_number(f[i + 3], lineno);
      row.metrics.tracked.push_back(s);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

json make_summary(const ExperimentConfig& config, const std::vector<RunOutcome>& runs) {
  const RunOutcome* baseline = nullptr;
  for (const auto& r : runs) {
    if (r.run.quant.mode == QuantMode::fp32) {
      baseline = &r;
      break;
    }
  }
  const auto nullable = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };

  json summary;
  summary["seed"] = config.seed;
  summary["epochs"] = config.epochs;
  summary["batch_size"] = config.batch_size;
  summary["baseline"] = baseline ? json(baseline->run.id) : json(nullptr);
  summary["runs"] = json::array();
  bool identical = true;
  for (const auto& r : runs) {
    const TrainResult& t = r.result;
    json entry;
    entry["id"] = r.run.id;
    entry["mode"] = std::string(to_string(r.run.quant.mode));
    entry["loss_scale"] = r.run.quant.loss_scale;
    entry["target_max"] = r.run.quant.target_max;
    entry["status"] = std::string(to_string(t.status));
    entry["steps"] = t.steps.size();
    entry["final_loss"] = nullable(t.final_loss);
    entry["train_accuracy"] = nullable(t.train_accuracy);
    entry["val_accuracy"] = nullable(t.val_accuracy);
    entry["delta_vs_baseline"] =
        baseline ? nullable(baseline->result.val_accuracy - t.val_accuracy) : json(nullptr);
    summary["runs"].push_back(entry);

    const auto& ref = runs.front().result.steps;
    for (std::size_t i = 0; i < std::min(ref.size(), t.steps.size()); ++i) {
      identical = identical && ref[i].batch_hash == t.steps[i].batch_hash;
    }
  }
  summary["batches_identical"] = identical;

  // FP32 / S2FP8 / delta / FP8 columns, first run of each mode
  const auto first_of = [&runs](QuantMode mode) -> const RunOutcome* {
    for (const auto& r : runs)
      if (r.run.quant.mode == mode) return &r;
    return nullptr;
  };
  const auto val_of = [&](const RunOutcome* r) {
    return r && r->result.status == RunStatus::ok ? nullable(r->result.val_accuracy) : json(nullptr);
  };
  const RunOutcome* s2 = first_of(QuantMode::s2fp8);
  const RunOutcome* f8 = first_of(QuantMode::fp8_rne);
  json table;
  table["fp32"] = val_of(baseline);
  table["s2fp8"] = val_of(s2);
  table["delta"] = table["fp32"].is_number() && table["s2fp8"].is_number()
                       ? json(table["fp32"].get<double>() - table["s2fp8"].get<double>())
                       : json(nullptr);
  table["fp8"] = f8 && f8->result.status == RunStatus::diverged ? json("NaN") : val_of(f8);
  summary["table"] = table;
  return summary;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  if (config.runs.empty()) throw ConfigError("config defines no runs");
  const SplitDataset data = load_dataset(config.dataset, config.seed);
  const ModelSpec spec = model_spec(config, data.train);
  const Model initial = build_model(spec, config.seed);
  const Dataset* val = data.val.size() > 0 ? &data.val : nullptr;

  TrainOptions options;
  options.epochs = config.epochs;
  options.batch_size = config.batch_size;
  options.seed = config.seed;
  options.tracked = config.tracked;

  ExperimentResult result;
  for (const RunConfig& run : config.runs) {
    Model model = initial;
    OptimizerState opt = make_optimizer(config.optimizer, model);
    result.runs.push_back({run, train(model, data.train, val, opt, run.quant, options)});
  }
  result.summary = make_summary(config, result.runs);

  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    std::ofstream csv(out_dir / "metrics.csv");
    if (!csv) throw IoError("cannot write " + (out_dir / "metrics.csv").string());
    write_metrics_csv(csv, result.runs);
    std::ofstream js(out_dir / "summary.json");
    if (!js) throw IoError("cannot write " + (out_dir / "summary.json").string());
    js << result.summary.dump(2) << '\n';
    if (!csv || !js) throw IoError("failed writing experiment outputs to " + out_dir.string());
  }
  return result;
}

// ---------------------------------------------------------------------------
// formats / quantize / checkgrad

std::string format_table(const std::vector<FloatFormat>& formats) {
  std::ostringstream out;
  const auto row = [&out](const std::vector<std::string>& cells) {
    static constexpr int widths[] = {8, 6, 8, 15, 15, 17, 12, 13, 9};
    for (std::size_t i = 0; i < cells.size(); ++i) out << std::left << std::setw(widths[i]) << cells[i];
    out << '\n';
  };
  row({"Format", "Bits", "s/e/m", "Min subnormal", "Min normal", "Max normal", "~Max normal", "Machine eps", "Range"});
  for (const FloatFormat& f : formats) {
    const FormatProperties p = format_properties(f);
    row({f.name(), std::to_string(f.total_bits()),
         "1/" + std::to_string(f.exp_bits()) + "/" + std::to_string(f.man_bits()), p.min_subnormal.to_string(),
         p.min_normal.to_string(), p.max_normal.to_string(), "2^" + std::to_string(f.max_exponent() + 1),
         p.machine_epsilon.to_string(),
         "2^" + std::to_string(p.range_log2)});
  }
  return out.str();
}

double QuantizeReport::flushed_fraction() const {
  return elements == 0 ? 0.0 : static_cast<double>(flushed) / static_cast<double>(elements);
}

QuantizeReport quantize_report(const Tensor& input, const Tensor& output, const S2Stats& stats) {
  if (input.shape() != output.shape()) throw ShapeError("quantize_report: shapes differ");
  QuantizeReport r;
  r.stats = stats;
  r.elements = input.size();
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double x = input[i];
    if (x == 0.0) continue;
    if (output[i] == 0.0f) ++r.flushed;
    r.max_relative_error = std::max(r.max_relative_error, std::fabs(output[i] - x) / std::fabs(x));
  }
  return r;
}

GradcheckRun run_checkgrad(const ExperimentConfig& config) {
  const SplitDataset data = load_dataset(config.dataset, config.seed);
  const Model model = build_model(model_spec(config, data.train), config.seed);
  const std::size_t n = std::min(config.checkgrad.samples, data.train.size());
  if (n == 0) throw ConfigError("checkgrad needs at least one sample");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  GradCheckOptions options;
  options.threshold = config.checkgrad.threshold;
  GradcheckRun out;
  out.parameters = model.parameter_count();
  out.report = check_gradients(model, data.train.gather(idx), data.train.gather_labels(idx), options);
  return out;
}

}  // namespace s2fp8
