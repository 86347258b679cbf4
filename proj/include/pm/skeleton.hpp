#pragma once

#include <array>
#include <string>
#include <string_view>

namespace pm {

// Canonical body model: 17 landmarks, 16 limbs forming a tree rooted at the
// head. Map channel k carries landmark k; PAF channels (2c, 2c+1) carry the
// x/y components for limb c, oriented parent -> child.

inline constexpr int kNumLandmarks = 17;
inline constexpr int kNumLimbs = 16;

enum LandmarkId : int {
  kHead = 0,
  kNeck = 1,
  kLShoulder = 2,
  kRShoulder = 3,
  kLElbow = 4,
  kRElbow = 5,
  kLWrist = 6,
  kRWrist = 7,
  kLHip = 8,
  kRHip = 9,
  kLKnee = 10,
  kRKnee = 11,
  kLAnkle = 12,
  kRAnkle = 13,
  kLEye = 14,
  kREye = 15,
  kMidHip = 16,
};

inline constexpr std::array<std::string_view, kNumLandmarks> kLandmarkNames = {
    "head",    "neck",    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
    "l_wrist", "r_wrist", "l_hip",      "r_hip",      "l_knee",  "r_knee",
    "l_ankle", "r_ankle", "l_eye",      "r_eye",      "mid_hip"};

struct Limb {
  int parent;
  int child;
};

inline constexpr std::array<Limb, kNumLimbs> kLimbs = {{
    {kHead, kLEye},
    {kHead, kREye},
    {kHead, kNeck},
    {kNeck, kLShoulder},
    {kLShoulder, kLElbow},
    {kLElbow, kLWrist},
    {kNeck, kRShoulder},
    {kRShoulder, kRElbow},
    {kRElbow, kRWrist},
    {kNeck, kMidHip},
    {kMidHip, kLHip},
    {kLHip, kLKnee},
    {kLKnee, kLAnkle},
    {kMidHip, kRHip},
    {kRHip, kRKnee},
    {kRKnee, kRAnkle},
}};

/// Index for a landmark name; -1 if unknown.
int landmark_index(std::string_view name);

}  // namespace pm
