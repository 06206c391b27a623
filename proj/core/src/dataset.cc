#include "slv/dataset.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <json.hpp>

#include "slv/error.h"

namespace slv {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Location of the line being parsed, threaded into every error message.
struct Where {
  std::string source;
  std::size_t line = 0;
  std::string record;

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    std::string msg = source + ":" + std::to_string(line) + ": ";
    if (!record.empty()) msg += "record '" + record + "': ";
    msg += "field '" + field + "': " + what;
    throw ParseError(msg);
  }
};

struct Line {
  std::size_t number = 0;
  json value;
};

// Reads every non-blank line as a JSON object.
std::vector<Line> read_lines(std::istream& in, const std::string& source) {
  std::vector<Line> lines;
  std::string text;
  std::size_t number = 0;
  while (std::getline(in, text)) {
    ++number;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded() || !value.is_object()) {
      throw ParseError(source + ":" + std::to_string(number) +
                       ": line is not a JSON object");
    }
    lines.push_back({number, std::move(value)});
  }
  return lines;
}

const json& require(const json& obj, const char* field, const Where& at) {
  const auto it = obj.find(field);
  if (it == obj.end()) at.fail(field, "missing");
  return *it;
}

std::int64_t as_int(const json& v, const std::string& field, const Where& at) {
  if (!v.is_number_integer()) at.fail(field, "expected an integer");
  return v.get<std::int64_t>();
}

double as_number(const json& v, const std::string& field, const Where& at) {
  if (!v.is_number()) at.fail(field, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) at.fail(field, "non-finite value");
  return d;
}

std::string as_string(const json& v, const std::string& field, const Where& at) {
  if (!v.is_string()) at.fail(field, "expected a string");
  return v.get<std::string>();
}

const json& as_array(const json& v, const std::string& field, const Where& at) {
  if (!v.is_array()) at.fail(field, "expected an array");
  return v;
}

Box as_box(const json& v, const std::string& field, const Where& at) {
  if (!v.is_array() || v.size() != 4) at.fail(field, "expected [x0, y0, x1, y1]");
  Box b;
  int* coords[] = {&b.x0, &b.y0, &b.x1, &b.y1};
  for (std::size_t k = 0; k < 4; ++k) {
    const auto c = as_int(v[k], field, at);
    if (c < INT32_MIN || c > INT32_MAX) at.fail(field, "coordinate out of range");
    *coords[k] = static_cast<int>(c);
  }
  if (!b.valid()) at.fail(field, "box has no area (need x0 < x1 and y0 < y1)");
  return b;
}

ordered_json box_json(const Box& b) { return ordered_json::array({b.x0, b.y0, b.x1, b.y1}); }

ordered_json class_boxes_json(const std::vector<ClassBoxes>& classes) {
  ordered_json arr = ordered_json::array();
  for (const auto& cb : classes) {
    ordered_json boxes = ordered_json::array();
    for (const Box& b : cb.boxes) boxes.push_back(box_json(b));
    arr.push_back({{"class", cb.class_id}, {"boxes", std::move(boxes)}});
  }
  return arr;
}

std::vector<ClassBoxes> parse_class_boxes(const json& v, const std::string& field,
                                          std::size_t num_classes, const Where& at) {
  std::vector<ClassBoxes> out;
  std::set<std::size_t> seen;
  for (const json& entry : as_array(v, field, at)) {
    if (!entry.is_object()) at.fail(field, "expected objects with 'class' and 'boxes'");
    const auto c = as_int(require(entry, "class", at), field + ".class", at);
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
      at.fail(field + ".class", "class id " + std::to_string(c) + " out of range");
    }
    if (!seen.insert(static_cast<std::size_t>(c)).second) {
      at.fail(field + ".class", "class " + std::to_string(c) + " listed twice");
    }
    ClassBoxes cb;
    cb.class_id = static_cast<std::size_t>(c);
    for (const json& b : as_array(require(entry, "boxes", at), field + ".boxes", at)) {
      cb.boxes.push_back(as_box(b, field + ".boxes", at));
    }
    out.push_back(std::move(cb));
  }
  std::sort(out.begin(), out.end(),
            [](const ClassBoxes& a, const ClassBoxes& b) { return a.class_id < b.class_id; });
  return out;
}

void check_header(const Line& line, const std::string& format, const std::string& source) {
  const Where at{source, line.number, ""};
  const auto fmt = as_string(require(line.value, "format", at), "format", at);
  if (fmt != format) at.fail("format", "expected '" + format + "', got '" + fmt + "'");
  const auto version = as_int(require(line.value, "version", at), "version", at);
  if (version != kFormatVersion) {
    at.fail("version", "unsupported version " + std::to_string(version));
  }
}

DatasetRecord parse_record(const Line& line, const Dataset& ds, const std::string& source,
                           std::vector<std::string>& warnings) {
  const json& obj = line.value;
  Where at{source, line.number, ""};
  DatasetRecord rec;
  rec.image_id = as_string(require(obj, "id", at), "id", at);
  if (rec.image_id.empty()) at.fail("id", "empty image id");
  at.record = rec.image_id;

  const auto h = as_int(require(obj, "height", at), "height", at);
  const auto w = as_int(require(obj, "width", at), "width", at);
  if (h <= 0 || h > INT32_MAX) at.fail("height", "must be a positive integer");
  if (w <= 0 || w > INT32_MAX) at.fail("width", "must be a positive integer");
  rec.height = static_cast<int>(h);
  rec.width = static_cast<int>(w);

  const json& labels = as_array(require(obj, "labels", at), "labels", at);
  if (labels.size() != ds.num_classes) {
    at.fail("labels", "expected " + std::to_string(ds.num_classes) + " entries, got " +
                          std::to_string(labels.size()));
  }
  std::vector<int> y;
  for (const json& v : labels) {
    const auto b = as_int(v, "labels", at);
    if (b != 0 && b != 1) at.fail("labels", "entries must be 0 or 1");
    y.push_back(static_cast<int>(b));
  }
  rec.labels = ImageLabel(std::move(y));

  const json& proposals = as_array(require(obj, "proposals", at), "proposals", at);
  for (std::size_t r = 0; r < proposals.size(); ++r) {
    const std::string field = "proposals[" + std::to_string(r) + "]";
    const Box b = as_box(proposals[r], field, at);
    if (b.inside(rec.height, rec.width)) {
      rec.proposals.push_back(b);
      continue;
    }
    try {
      rec.proposals.push_back(clip_box(b, rec.height, rec.width));
    } catch (const InputError&) {
      at.fail(field, "box lies entirely outside the image");
    }
    warnings.push_back(source + ":" + std::to_string(line.number) + ": record '" +
                       rec.image_id + "': " + field + " clipped to the image");
  }
  const std::size_t num_props = rec.proposals.size();

  if (const auto it = obj.find("features"); it != obj.end()) {
    if (ds.feature_dim == 0) at.fail("features", "dataset header declares no features");
    const json& rows = as_array(*it, "features", at);
    if (rows.size() != num_props) {
      at.fail("features", "expected one row per proposal (" + std::to_string(num_props) + ")");
    }
    for (const json& row : rows) {
      const json& vals = as_array(row, "features", at);
      if (vals.size() != ds.feature_dim) {
        at.fail("features", "expected rows of " + std::to_string(ds.feature_dim) + " values");
      }
      std::vector<double> f;
      f.reserve(vals.size());
      for (const json& v : vals) f.push_back(as_number(v, "features", at));
      rec.features.push_back(std::move(f));
    }
  } else if (ds.feature_dim > 0) {
    at.fail("features", "missing (header declares feature_dim " +
                            std::to_string(ds.feature_dim) + ")");
  }

  if (const auto it = obj.find("scores"); it != obj.end()) {
    const json& rows = as_array(*it, "scores", at);
    if (rows.size() != ds.num_classes) {
      at.fail("scores", "expected one row per class (" + std::to_string(ds.num_classes) + ")");
    }
    ScoreMatrix m(ds.num_classes, num_props, 0.0, Normalization::kProbability);
    for (std::size_t c = 0; c < rows.size(); ++c) {
      const json& vals = as_array(rows[c], "scores", at);
      if (vals.size() != num_props) {
        at.fail("scores", "expected rows of " + std::to_string(num_props) + " values");
      }
      for (std::size_t r = 0; r < num_props; ++r) m(c, r) = as_number(vals[r], "scores", at);
    }
    rec.scores = std::move(m);
  }

  if (const auto it = obj.find("gt"); it != obj.end()) {
    rec.has_ground_truth = true;
    rec.ground_truth = parse_class_boxes(*it, "gt", ds.num_classes, at);
    for (const auto& cb : rec.ground_truth) {
      for (const Box& b : cb.boxes) {
        if (!b.inside(rec.height, rec.width)) at.fail("gt", "box outside image bounds");
      }
    }
  }
  return rec;
}

template <class Json>
void write_line(std::ostream& out, const Json& value) {
  out << value.dump() << '\n';
}

}  // namespace

GroundTruthSet Dataset::ground_truth() const {
  GroundTruthSet gt;
  for (const auto& rec : records) {
    auto& per_class = gt[rec.image_id];
    for (const auto& cb : rec.ground_truth) {
      auto& boxes = per_class[cb.class_id];
      boxes.insert(boxes.end(), cb.boxes.begin(), cb.boxes.end());
    }
  }
  return gt;
}

std::string Dataset::class_name(std::size_t c) const {
  return c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
}

LoadedDataset parse_dataset(std::istream& in, const std::string& source) {
  LoadedDataset out;
  const auto lines = read_lines(in, source);
  if (lines.empty()) return out;

  check_header(lines.front(), "slv-dataset", source);
  const Where at{source, lines.front().number, ""};
  const json& header = lines.front().value;
  Dataset& ds = out.dataset;
  const auto nc = as_int(require(header, "num_classes", at), "num_classes", at);
  if (nc < 0) at.fail("num_classes", "must be non-negative");
  ds.num_classes = static_cast<std::size_t>(nc);
  if (const auto it = header.find("feature_dim"); it != header.end()) {
    const auto d = as_int(*it, "feature_dim", at);
    if (d < 0) at.fail("feature_dim", "must be non-negative");
    ds.feature_dim = static_cast<std::size_t>(d);
  }
  if (const auto it = header.find("class_names"); it != header.end()) {
    for (const json& n : as_array(*it, "class_names", at)) {
      ds.class_names.push_back(as_string(n, "class_names", at));
    }
    if (ds.class_names.size() != ds.num_classes) {
      at.fail("class_names", "expected " + std::to_string(ds.num_classes) + " names");
    }
  }

  std::set<std::string> ids;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    DatasetRecord rec = parse_record(lines[i], ds, source, out.warnings);
    if (!ids.insert(rec.image_id).second) {
      Where{source, lines[i].number, rec.image_id}.fail("id", "duplicate image id");
    }
    ds.records.push_back(std::move(rec));
  }
  return out;
}

LoadedDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset file '" + path + "'");
  return parse_dataset(in, path);
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  ordered_json header = {{"format", "slv-dataset"},
                         {"version", kFormatVersion},
                         {"num_classes", ds.num_classes},
                         {"feature_dim", ds.feature_dim}};
  if (!ds.class_names.empty()) header["class_names"] = ds.class_names;
  write_line(out, header);

  for (const auto& rec : ds.records) {
    ordered_json obj;
    obj["id"] = rec.image_id;
    obj["height"] = rec.height;
    obj["width"] = rec.width;
    obj["labels"] = rec.labels.values();
    ordered_json props = ordered_json::array();
    for (const Box& b : rec.proposals) props.push_back(box_json(b));
    obj["proposals"] = std::move(props);
    if (!rec.features.empty()) obj["features"] = rec.features;
    if (rec.scores) {
      ordered_json rows = ordered_json::array();
      for (std::size_t c = 0; c < rec.scores->rows(); ++c) {
        const auto row = rec.scores->row(c);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
      }
      obj["scores"] = std::move(rows);
    }
    if (rec.has_ground_truth) obj["gt"] = class_boxes_json(rec.ground_truth);
    write_line(out, obj);
  }
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write dataset file '" + path + "'");
  write_dataset(out, dataset);
}

void write_pseudo_labels(std::ostream& out, std::size_t num_classes,
                         const std::vector<PseudoLabelRecord>& records) {
  write_line(out, ordered_json{{"format", "slv-pseudo-labels"},
                               {"version", kFormatVersion},
                               {"num_classes", num_classes}});
  for (const auto& rec : records) {
    ordered_json obj;
    obj["id"] = rec.image_id;
    obj["supervision"] = class_boxes_json(rec.supervision.classes);
    if (rec.error) obj["error"] = *rec.error;
    write_line(out, obj);
  }
}

std::vector<PseudoLabelRecord> parse_pseudo_labels(std::istream& in,
                                                   const std::string& source) {
  const auto lines = read_lines(in, source);
  std::vector<PseudoLabelRecord> out;
  if (lines.empty()) return out;
  check_header(lines.front(), "slv-pseudo-labels", source);
  const Where hat{source, lines.front().number, ""};
  const auto nc = as_int(require(lines.front().value, "num_classes", hat), "num_classes", hat);
  if (nc < 0) hat.fail("num_classes", "must be non-negative");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    Where at{source, lines[i].number, ""};
    PseudoLabelRecord rec;
    rec.image_id = as_string(require(lines[i].value, "id", at), "id", at);
    at.record = rec.image_id;
    rec.supervision.classes = parse_class_boxes(require(lines[i].value, "supervision", at),
                                                "supervision", static_cast<std::size_t>(nc), at);
    if (const auto it = lines[i].value.find("error"); it != lines[i].value.end()) {
      rec.error = as_string(*it, "error", at);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_detections(std::ostream& out, const std::vector<Detection>& dets) {
  write_line(out, ordered_json{{"format", "slv-detections"}, {"version", kFormatVersion}});
  for (const auto& d : dets) {
    write_line(out, ordered_json{{"image", d.image_id},
                                 {"class", d.class_id},
                                 {"box", box_json(d.box)},
                                 {"score", d.score}});
  }
}

std::vector<Detection> parse_detections(std::istream& in, const std::string& source) {
  const auto lines = read_lines(in, source);
  std::vector<Detection> out;
  if (lines.empty()) return out;
  check_header(lines.front(), "slv-detections", source);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    Where at{source, lines[i].number, ""};
    const json& obj = lines[i].value;
    Detection d;
    d.image_id = as_string(require(obj, "image", at), "image", at);
    at.record = d.image_id;
    const auto c = as_int(require(obj, "class", at), "class", at);
    if (c < 0) at.fail("class", "negative class id");
    d.class_id = static_cast<std::size_t>(c);
    d.box = as_box(require(obj, "box", at), "box", at);
    d.score = as_number(require(obj, "score", at), "score", at);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Detection> load_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open detections file '" + path + "'");
  return parse_detections(in, path);
}

}  // namespace slv
