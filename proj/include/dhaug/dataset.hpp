#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dhaug/camera.hpp"
#include "dhaug/gan.hpp"
#include "dhaug/skeleton.hpp"

namespace dhaug {

enum class Provenance { real, synthetic };

struct DatasetRecord {
  Pose3D pose3d;
  Pose2D pose2d;  // pixels
  CameraIntrinsics camera;
  long sequence_id = 0;
  int frame_index = 0;
  Provenance provenance = Provenance::synthetic;
  /// Generating values, when known (synthetic records).
  std::optional<ParamVector> params;
  std::optional<GlobalTransform> global;
};

/// Line-oriented writer. Text records print every real in shortest
/// round-trip form; the binary variant stores little-endian float32.
class DatasetWriter {
 public:
  DatasetWriter(const std::string& path, std::uint64_t topology_hash, bool binary = false);
  void write(const DatasetRecord& record);
  void close();
  long count() const { return count_; }

 private:
  std::string path_;
  std::ofstream out_;
  bool binary_;
  long count_ = 0;
};

void save_dataset(const std::vector<DatasetRecord>& records, const std::string& path,
                  std::uint64_t topology_hash = default_topology().hash(), bool binary = false);

struct LoadedDataset {
  std::vector<DatasetRecord> records;
  std::uint64_t topology_hash = 0;
  std::vector<std::string> warnings;
};

/// Reads either variant. Throws ParseError naming the offending line; a
/// topology mismatch against `expected` only adds a warning.
LoadedDataset load_dataset(const std::string& path, const SkeletonTopology& expected = default_topology());

struct SynthOptions {
  long count = 1000;  // poses, or sequences in video mode
  std::uint64_t seed = 0;
  bool binary = false;
  long batch = 1024;
};

struct SynthSummary {
  long count = 0;  // poses, or sequences in video mode
  long records = 0;
  long violations = 0;
  long rejected = 0;
  double seconds = 0.0;
};

/// Streams generated records to `path` batch by batch; sequences with a joint
/// in front of z_min are dropped and replaced by fresh samples.
SynthSummary synthesize_dataset(const DhGenerator& gen, const SynthOptions& options, const std::string& path);

/// Records of a generated batch, sequence ids starting at `first_sequence`.
std::vector<DatasetRecord> batch_records(const GeneratedBatch& batch, const CameraIntrinsics& camera,
                                         long first_sequence);

/// Checks constraint validity and 2D/3D consistency (1e-6 px) of a record.
/// Returns the number of problems found.
long check_record(const DatasetRecord& record, const ConstraintTable& table, double tolerance_px = 1e-6);

/// Training pairs in sequence order; in video mode each sequence is cut into
/// consecutive windows of `frames`, dropping a shorter tail.
std::vector<PosePair> training_pairs(const std::vector<DatasetRecord>& records, GenMode mode, int frames);

struct SkeletonVideo {
  std::vector<std::string> keypoints;
  std::vector<Bone> edges;
  std::vector<Pose3D> frames;
};

void export_skeleton_video(const std::vector<Pose3D>& sequence, const SkeletonTopology& topology,
                           const std::string& path);
SkeletonVideo load_skeleton_video(const std::string& path);

}  // namespace dhaug
