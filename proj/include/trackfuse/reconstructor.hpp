#pragma once

#include <span>
#include <string>

#include "trackfuse/datamodel.hpp"

namespace trackfuse {

// Maps a window's first-frame box plus its IMU and FTM rows to WL boxes. Row 0
// of the result must equal `first`. Reconstructors may keep state across the
// consecutive windows of one sequence; reset() starts a new sequence.
class Reconstructor {
 public:
  virtual ~Reconstructor() = default;
  virtual std::string name() const = 0;
  virtual void reset() {}
  virtual Tracklet reconstruct(const BBox5& first, std::span<const ImuRow> imu,
                               std::span<const FtmRow> ftm) = 0;
};

// Throws ShapeMismatch unless `out` has `wl` rows and starts at `first`.
void check_contract(const Tracklet& out, const BBox5& first, std::size_t wl);

}  // namespace trackfuse
