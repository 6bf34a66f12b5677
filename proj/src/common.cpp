#include "mpd/common.hpp"

#include <fmt/format.h>

namespace mpd {

void Box::validate() const {
  if (lower.size() != upper.size()) {
    throw ConfigError(fmt::format("box bounds have different lengths ({} vs {})", lower.size(),
                                  upper.size()));
  }
  if (lower.size() == 0) throw ConfigError("box must have at least one dimension");
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!(lower(i) < upper(i))) {
      throw ConfigError(fmt::format("box dimension {}: lower {} is not below upper {}", i,
                                    lower(i), upper(i)));
    }
  }
}

bool Box::contains(const Vector& x) const {
  if (x.size() != lower.size()) return false;
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw ShapeError(fmt::format("{}: expected dimension {}, got {}", what, want, got));
  }
}

}  // namespace mpd
