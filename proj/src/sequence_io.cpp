#include "trackfuse/sequence_io.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <json.hpp>
#include <ostream>
#include <tuple>

#include "trackfuse/errors.hpp"

namespace trackfuse {

using nlohmann::json;

namespace {

const json& field(const json& obj, const char* name, std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end()) throw SchemaError(name, line);
  return *it;
}

double number(const json& v, const char* name, std::size_t line) {
  if (!v.is_number()) throw ParseError(line, std::string("\"") + name + "\" must be a number");
  return v.get<double>();
}

std::vector<double> values(const json& v, std::size_t expected, std::size_t line) {
  if (!v.is_array()) throw ParseError(line, "\"v\" must be an array");
  if (v.size() != expected)
    throw ParseError(line, "\"v\" has " + std::to_string(v.size()) + " values, expected " +
                               std::to_string(expected));
  std::vector<double> out;
  for (const auto& x : v) out.push_back(number(x, "v", line));
  return out;
}

void check_order(double prev, double t, std::size_t line) {
  if (!(t > prev))
    throw ParseError(line, "timestamp " + std::to_string(t) + " does not increase (previous " +
                               std::to_string(prev) + ")");
}

}  // namespace

SceneSequence read_sequence(std::istream& in) {
  SceneSequence seq;
  std::map<std::string, std::size_t> index;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(line, std::string("invalid JSON: ") + e.what());
    }
    if (!rec.is_object()) throw ParseError(line, "expected a JSON object");

    if (!have_header) {
      const json& scene = field(rec, "scene", line);
      const json& fps = field(rec, "camera_fps", line);
      const json& subjects = field(rec, "subjects", line);
      if (!scene.is_string()) throw ParseError(line, "\"scene\" must be a string");
      if (!subjects.is_array()) throw ParseError(line, "\"subjects\" must be an array");
      seq.scene = scene.get<std::string>();
      seq.camera_fps = number(fps, "camera_fps", line);
      for (const auto& s : subjects) {
        if (!s.is_string()) throw ParseError(line, "subject ids must be strings");
        const auto id = s.get<std::string>();
        if (index.count(id)) throw ParseError(line, "duplicate subject \"" + id + "\"");
        index[id] = seq.subjects.size();
        seq.subjects.push_back(SubjectStreams{id, {}, {}, {}});
      }
      have_header = true;
      continue;
    }

    const json& subj = field(rec, "subj", line);
    const json& mod = field(rec, "mod", line);
    const double t = number(field(rec, "t", line), "t", line);
    const json& v = field(rec, "v", line);
    if (!subj.is_string() || !mod.is_string())
      throw ParseError(line, "\"subj\" and \"mod\" must be strings");
    auto found = index.find(subj.get<std::string>());
    if (found == index.end())
      throw ParseError(line, "unknown subject \"" + subj.get<std::string>() + "\"");
    SubjectStreams& s = seq.subjects[found->second];
    const auto kind = mod.get<std::string>();
    if (kind == "bbx") {
      auto x = values(v, 5, line);
      if (!s.boxes.empty()) check_order(s.boxes.back().t, t, line);
      s.boxes.push_back(BoxSample{t, BBox5::from_array(x)});
    } else if (kind == "imu") {
      auto x = values(v, 9, line);
      if (!s.imu.empty()) check_order(s.imu.back().t, t, line);
      s.imu.push_back(ImuSample{t, {x[0], x[1], x[2]}, {x[3], x[4], x[5]}, {x[6], x[7], x[8]}});
    } else if (kind == "ftm") {
      auto x = values(v, 2, line);
      if (!s.ftm.empty()) check_order(s.ftm.back().t, t, line);
      s.ftm.push_back(FtmSample{t, x[0], x[1]});
    } else {
      throw ParseError(line, "unknown modality \"" + kind + "\"");
    }
  }
  if (!have_header) throw ParseError(line, "missing header line");
  return seq;
}

void write_sequence(const SceneSequence& seq, std::ostream& out) {
  json header = {{"scene", seq.scene}, {"camera_fps", seq.camera_fps}, {"subjects", json::array()}};
  for (const auto& s : seq.subjects) header["subjects"].push_back(s.id);
  out << header.dump() << '\n';

  // Interleave all streams by time so the file reads like a capture log.
  struct Ref {
    double t;
    std::size_t subject;
    int mod;
    std::size_t idx;
  };
  std::vector<Ref> refs;
  for (std::size_t si = 0; si < seq.subjects.size(); ++si) {
    const auto& s = seq.subjects[si];
    for (std::size_t i = 0; i < s.boxes.size(); ++i) refs.push_back({s.boxes[i].t, si, 0, i});
    for (std::size_t i = 0; i < s.imu.size(); ++i) refs.push_back({s.imu[i].t, si, 1, i});
    for (std::size_t i = 0; i < s.ftm.size(); ++i) refs.push_back({s.ftm[i].t, si, 2, i});
  }
  std::stable_sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) {
    return std::tie(a.t, a.subject, a.mod) < std::tie(b.t, b.subject, b.mod);
  });

  for (const Ref& r : refs) {
    const auto& s = seq.subjects[r.subject];
    json rec;
    rec["subj"] = s.id;
    switch (r.mod) {
      case 0: {
        const auto& b = s.boxes[r.idx];
        rec["mod"] = "bbx";
        rec["t"] = b.t;
        rec["v"] = b.box.to_array();
        break;
      }
      case 1: {
        const auto& m = s.imu[r.idx];
        rec["mod"] = "imu";
        rec["t"] = m.t;
        rec["v"] = {m.acc[0], m.acc[1], m.acc[2], m.gyro[0], m.gyro[1],
                    m.gyro[2], m.mag[0], m.mag[1], m.mag[2]};
        break;
      }
      default: {
        const auto& f = s.ftm[r.idx];
        rec["mod"] = "ftm";
        rec["t"] = f.t;
        rec["v"] = {f.r, f.std};
        break;
      }
    }
    out << rec.dump() << '\n';
  }
}

SceneSequence load_sequence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_sequence(in);
}

void save_sequence(const SceneSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_sequence(seq, out);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace trackfuse
