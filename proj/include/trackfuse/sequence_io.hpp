#pragma once

#include <filesystem>
#include <iosfwd>

#include "trackfuse/datamodel.hpp"

namespace trackfuse {

// JSON Lines scene file. First line is the header
//   {"scene": str, "camera_fps": num, "subjects": [str]}
// followed by one record per raw sample
//   {"subj": str, "mod": "bbx"|"imu"|"ftm", "t": seconds, "v": [floats]}
// with v of length 5 / 9 / 2. Per-stream timestamps must strictly increase.
//
// Throws ParseError (with the offending line) or SchemaError (missing field).
SceneSequence read_sequence(std::istream& in);
void write_sequence(const SceneSequence& seq, std::ostream& out);

SceneSequence load_sequence(const std::filesystem::path& path);
// Throws IoError when the file cannot be written.
void save_sequence(const SceneSequence& seq, const std::filesystem::path& path);

}  // namespace trackfuse
