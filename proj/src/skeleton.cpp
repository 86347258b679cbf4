#include "pm/skeleton.hpp"

namespace pm {

int landmark_index(std::string_view name) {
  for (int i = 0; i < kNumLandmarks; ++i)
    if (kLandmarkNames[static_cast<std::size_t>(i)] == name) return i;
  return -1;
}

}  // namespace pm
