#include "dhaug/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include "dhaug/errors.hpp"
#include "json.hpp"

namespace dhaug {

namespace {

constexpr const char* kTextMagic = "# dhaug-dataset 1";
constexpr const char* kBinaryMagic = "DHAUG-DATA-BIN 1";
constexpr int kExtraCount = kParamCount + kGlobalCount;

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << v;
  return s.str();
}

void put_real(std::string& line, double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  line.push_back(' ');
  line.append(buf, r.ptr);
}

/// Flat list of every real of a record in file order.
std::vector<double> flatten(const DatasetRecord& r) {
  std::vector<double> v = {r.camera.fx, r.camera.fy, r.camera.cx, r.camera.cy, r.camera.z_min};
  for (const Vec3& p : r.pose3d.joints) v.insert(v.end(), {p.x(), p.y(), p.z()});
  for (const Vec2& p : r.pose2d.joints) v.insert(v.end(), {p.x(), p.y()});
  if (r.params && r.global) {
    v.insert(v.end(), r.params->values.begin(), r.params->values.end());
    const auto g = r.global->to_array();
    v.insert(v.end(), g.begin(), g.end());
  }
  return v;
}

void put_u32(std::ostream& out, std::uint32_t bits) {
  const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                              static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& bits) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  bits = b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
  return true;
}

}  // namespace

DatasetWriter::DatasetWriter(const std::string& path, std::uint64_t topology_hash, bool binary)
    : path_(path), out_(path, std::ios::binary), binary_(binary) {
  if (!out_) throw std::runtime_error("cannot write " + path);
  if (binary_) {
    out_ << kBinaryMagic << " topology=" << hex(topology_hash) << "\n";
  } else {
    out_ << kTextMagic << " topology=" << hex(topology_hash) << " keypoints=" << kKeypointCount << "\n"
         << "# prov seq frame fx fy cx cy z_min pose3d[48] pose2d[32] k values[k]\n";
  }
}

void DatasetWriter::write(const DatasetRecord& r) {
  const std::vector<double> values = flatten(r);
  const int extra = r.params && r.global ? kExtraCount : 0;
  if (binary_) {
    out_.put(r.provenance == Provenance::real ? 'R' : 'S');
    put_u32(out_, static_cast<std::uint32_t>(r.sequence_id));
    put_u32(out_, static_cast<std::uint32_t>(r.frame_index));
    out_.put(static_cast<char>(extra));
    for (double v : values) put_u32(out_, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  } else {
    std::string line(1, r.provenance == Provenance::real ? 'R' : 'S');
    line += ' ' + std::to_string(r.sequence_id) + ' ' + std::to_string(r.frame_index);
    const std::size_t fixed = values.size() - extra;
    for (std::size_t i = 0; i < fixed; ++i) put_real(line, values[i]);
    line += ' ' + std::to_string(extra);
    for (std::size_t i = fixed; i < values.size(); ++i) put_real(line, values[i]);
    line.push_back('\n');
    out_ << line;
  }
  if (!out_) throw std::runtime_error("write failed for " + path_);
  ++count_;
}

void DatasetWriter::close() {
  out_.flush();
  if (!out_) throw std::runtime_error("write failed for " + path_);
  out_.close();
}

void save_dataset(const std::vector<DatasetRecord>& records, const std::string& path, std::uint64_t topology_hash,
                  bool binary) {
  DatasetWriter w(path, topology_hash, binary);
  for (const DatasetRecord& r : records) w.write(r);
  w.close();
}

namespace {

DatasetRecord record_from_values(char prov, long seq, long frame, const std::vector<double>& v, int extra,
                                 const std::string& path, long line) {
  if (prov != 'R' && prov != 'S') throw ParseError(path, line, "provenance must be R or S");
  if (seq < 0 || frame < 0) throw ParseError(path, line, "negative sequence or frame index");
  for (double x : v) {
    if (!std::isfinite(x)) throw ParseError(path, line, "non-finite value");
  }
  DatasetRecord r;
  r.provenance = prov == 'R' ? Provenance::real : Provenance::synthetic;
  r.sequence_id = seq;
  r.frame_index = static_cast<int>(frame);
  r.camera = {v[0], v[1], v[2], v[3], v[4]};
  try {
    r.camera.check();
  } catch (const InvalidArgument& e) {
    throw ParseError(path, line, e.what());
  }
  std::size_t at = 5;
  for (Vec3& p : r.pose3d.joints) {
    p = Vec3(v[at], v[at + 1], v[at + 2]);
    at += 3;
  }
  for (Vec2& p : r.pose2d.joints) {
    p = Vec2(v[at], v[at + 1]);
    at += 2;
  }
  if (extra == kExtraCount) {
    r.params = ParamVector(std::vector<double>(v.begin() + at, v.begin() + at + kParamCount));
    r.global = GlobalTransform::from_array(std::span<const double>(v.data() + at + kParamCount, kGlobalCount));
  }
  return r;
}

constexpr std::size_t kFixedReals = 5 + 3 * kKeypointCount + 2 * kKeypointCount;

std::uint64_t parse_topology(const std::string& header, const std::string& path) {
  const auto pos = header.find("topology=");
  if (pos == std::string::npos) throw ParseError(path, 1, "header lacks a topology hash");
  std::uint64_t h = 0;
  const char* b = header.data() + pos + 9;
  const char* e = header.data() + header.size();
  const auto r = std::from_chars(b, e, h, 16);
  if (r.ec != std::errc()) throw ParseError(path, 1, "bad topology hash");
  return h;
}

template <class T>
bool parse_token(std::string_view tok, T& out) {
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return r.ec == std::errc() && r.ptr == tok.data() + tok.size();
}

}  // namespace

LoadedDataset load_dataset(const std::string& path, const SkeletonTopology& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open dataset");
  std::string header;
  std::getline(in, header);
  LoadedDataset out;
  const bool binary = header.rfind(kBinaryMagic, 0) == 0;
  if (!binary && header.rfind(kTextMagic, 0) != 0) throw ParseError(path, 1, "not a dataset file");
  out.topology_hash = parse_topology(header, path);
  if (out.topology_hash != expected.hash()) {
    out.warnings.push_back("topology hash " + hex(out.topology_hash) + " differs from the active topology " +
                           hex(expected.hash()));
  }
  if (binary) {
    long index = 0;
    while (true) {
      const int prov = in.get();
      if (prov == EOF) break;
      ++index;
      std::uint32_t seq = 0, frame = 0;
      const int extra = get_u32(in, seq) && get_u32(in, frame) ? in.get() : EOF;
      if (extra != 0 && extra != kExtraCount) throw ParseError(path, index, "truncated or corrupt binary record");
      std::vector<double> v(kFixedReals + extra);
      for (double& x : v) {
        std::uint32_t bits;
        if (!get_u32(in, bits)) throw ParseError(path, index, "truncated binary record");
        x = std::bit_cast<float>(bits);
      }
      out.records.push_back(record_from_values(static_cast<char>(prov), seq, frame, v, extra, path, index));
    }
    return out;
  }
  std::string line;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string_view> tok;
    std::string_view sv(line);
    while (!sv.empty()) {
      const auto start = sv.find_first_not_of(" \t\r");
      if (start == std::string_view::npos) break;
      sv.remove_prefix(start);
      const auto end = std::min(sv.find_first_of(" \t\r"), sv.size());
      tok.push_back(sv.substr(0, end));
      sv.remove_prefix(end);
    }
    const std::size_t fixed = 3 + kFixedReals + 1;
    if (tok.size() < fixed) {
      throw ParseError(path, lineno, "expected at least " + std::to_string(fixed) + " fields, got " +
                                         std::to_string(tok.size()));
    }
    if (tok[0].size() != 1) throw ParseError(path, lineno, "provenance must be R or S");
    long seq = 0, frame = 0;
    int extra = 0;
    if (!parse_token(tok[1], seq) || !parse_token(tok[2], frame) || !parse_token(tok[3 + kFixedReals], extra)) {
      throw ParseError(path, lineno, "malformed integer field");
    }
    if (extra != 0 && extra != kExtraCount) throw ParseError(path, lineno, "extra value count must be 0 or 54");
    if (tok.size() != fixed + extra) {
      throw ParseError(path, lineno, "expected " + std::to_string(fixed + extra) + " fields, got " +
                                         std::to_string(tok.size()));
    }
    std::vector<double> v;
    v.reserve(kFixedReals + extra);
    for (std::size_t i = 3; i < tok.size(); ++i) {
      if (i == 3 + kFixedReals) continue;
      double x = 0.0;
      if (!parse_token(tok[i], x)) throw ParseError(path, lineno, "malformed number '" + std::string(tok[i]) + "'");
      v.push_back(x);
    }
    out.records.push_back(record_from_values(tok[0][0], seq, frame, v, extra, path, lineno));
  }
  return out;
}

std::vector<DatasetRecord> batch_records(const GeneratedBatch& batch, const CameraIntrinsics& camera,
                                         long first_sequence) {
  std::vector<DatasetRecord> out;
  long seq = first_sequence;
  for (long s = 0; s < batch.sequences(); ++s) {
    if (batch.rejected[s]) continue;
    for (int t = 0; t < batch.frames; ++t) {
      const long i = s * batch.frames + t;
      DatasetRecord r;
      r.pose3d = batch.poses3d[i];
      r.pose2d = batch.poses2d[i];
      r.camera = camera;
      r.sequence_id = seq;
      r.frame_index = t;
      r.provenance = Provenance::synthetic;
      r.params = batch.params[i];
      r.global = batch.globals[i];
      out.push_back(std::move(r));
    }
    ++seq;
  }
  return out;
}

long check_record(const DatasetRecord& record, const ConstraintTable& table, double tolerance_px) {
  long problems = 0;
  if (record.params) problems += static_cast<long>(validate_params(*record.params, table).violations.size());
  try {
    const Pose2D p = project_pose(record.pose3d, record.camera);
    for (int j = 0; j < kKeypointCount; ++j) {
      if (!((p.joints[j] - record.pose2d.joints[j]).cwiseAbs().maxCoeff() <= tolerance_px)) ++problems;
    }
  } catch (const DepthViolation&) {
    ++problems;
  }
  return problems;
}

SynthSummary synthesize_dataset(const DhGenerator& gen, const SynthOptions& options, const std::string& path) {
  if (options.count < 1) throw InvalidArgument("synthesize_dataset: count must be >= 1");
  if (options.batch < 1) throw InvalidArgument("synthesize_dataset: batch must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(options.seed);
  DatasetWriter writer(path, gen.topology().hash(), options.binary);
  SynthSummary summary;
  while (summary.count < options.count) {
    const long n = std::min(options.batch, options.count - summary.count);
    const GeneratedBatch batch = generate(gen, sample_latent(n, gen.z_dim(), rng));
    for (char r : batch.rejected) summary.rejected += r;
    for (const DatasetRecord& rec : batch_records(batch, gen.camera(), summary.count)) {
      summary.violations += check_record(rec, gen.table());
      writer.write(rec);
      ++summary.records;
    }
    summary.count += batch.sequences() - std::count(batch.rejected.begin(), batch.rejected.end(), 1);
  }
  writer.close();
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return summary;
}

std::vector<PosePair> training_pairs(const std::vector<DatasetRecord>& records, GenMode mode, int frames) {
  std::vector<PosePair> out;
  if (mode == GenMode::single_frame) {
    for (const DatasetRecord& r : records) out.push_back({r.pose3d, r.pose2d, r.camera});
    return out;
  }
  std::map<long, std::vector<const DatasetRecord*>> seqs;
  for (const DatasetRecord& r : records) seqs[r.sequence_id].push_back(&r);
  for (auto& [id, rs] : seqs) {
    std::stable_sort(rs.begin(), rs.end(), [](auto* a, auto* b) { return a->frame_index < b->frame_index; });
    for (std::size_t start = 0; start + frames <= rs.size(); start += frames) {
      for (int t = 0; t < frames; ++t) {
        const DatasetRecord& r = *rs[start + t];
        out.push_back({r.pose3d, r.pose2d, r.camera});
      }
    }
  }
  return out;
}

void export_skeleton_video(const std::vector<Pose3D>& sequence, const SkeletonTopology& topology,
                           const std::string& path) {
  using nlohmann::json;
  if (sequence.empty()) throw InvalidArgument("export_skeleton_video: empty sequence");
  json edges = json::array();
  for (const Bone& b : topology.bones()) edges.push_back({b.parent, b.child});
  json frames = json::array();
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    json joints = json::array();
    for (const Vec3& p : sequence[t].joints) joints.push_back({p.x(), p.y(), p.z()});
    frames.push_back({{"index", t}, {"joints", joints}});
  }
  const json j = {{"format", "dhaug-skeleton-video/1"},
                  {"units", "meters, camera space"},
                  {"keypoints", topology.keypoint_names()},
                  {"edges", edges},
                  {"frames", frames}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(1) << "\n";
  if (!out) throw std::runtime_error("write failed for " + path);
}

SkeletonVideo load_skeleton_video(const std::string& path) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open skeleton video");
  SkeletonVideo v;
  try {
    json j;
    in >> j;
    if (j.at("format").get<std::string>() != "dhaug-skeleton-video/1") throw ParseError(path, 0, "unknown format");
    v.keypoints = j.at("keypoints").get<std::vector<std::string>>();
    for (const auto& e : j.at("edges")) v.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    for (const auto& f : j.at("frames")) {
      const auto& joints = f.at("joints");
      if (joints.size() != kKeypointCount) throw ParseError(path, 0, "frame needs 16 joints");
      Pose3D p;
      for (int k = 0; k < kKeypointCount; ++k) {
        p.joints[k] = Vec3(joints[k].at(0).get<double>(), joints[k].at(1).get<double>(), joints[k].at(2).get<double>());
      }
      v.frames.push_back(p);
    }
  } catch (const json::exception& e) {
    throw ParseError(path, 0, e.what());
  }
  return v;
}

}  // namespace dhaug
