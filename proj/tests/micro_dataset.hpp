#pragma once

// Frozen two-scene, two-class evaluation fixture with hand-computed AP.
//
// Class 0 has 2 gt. Ranked predictions: TP, FP (far), TP, FP (duplicate).
//   PR points (1/2, 1), (1/2, 1/2), (1, 2/3), (1, 1/2).
//   All-point AP = 1/2 * 1 + 1/2 * 2/3 = 5/6; 40-point AP is also 5/6.
// Class 1 has 3 gt. Ranked predictions: TP, FP (far), and a box shifted by
// half a width against the third gt (IoU 1/3), so TP at 0.25 and FP at 0.5.
//   At 0.25: PR (1/3, 1), (1/3, 1/2), (2/3, 2/3).
//     All-point 1/3 + 1/3 * 2/3 = 5/9; 40-point (13 * 1 + 13 * 2/3) / 40 = 13/24.
//   At 0.5: PR (1/3, 1), (1/3, 1/2), (1/3, 1/3).
//     All-point 1/3; 40-point 13/40.

#include <vector>

#include "ioumatch/eval.hpp"

namespace micro {

inline ioumatch::OrientedBox3D unit_at(double x, double y = 0.0) {
  return ioumatch::OrientedBox3D(ioumatch::Vec3(x, y, 0.5), ioumatch::Vec3::Ones(), 0.0);
}

inline std::vector<ioumatch::EvalScene> scenes() {
  using ioumatch::EvalScene;
  EvalScene a{"scene_a", {}, {}};
  a.ground_truth = {{unit_at(0), 0}, {unit_at(5), 1}, {unit_at(10), 1}};
  a.predictions = {{unit_at(0), 0, 0.9}, {unit_at(0), 0, 0.6}, {unit_at(5), 1, 0.95},
                   {unit_at(10.5), 1, 0.75}};
  EvalScene b{"scene_b", {}, {}};
  b.ground_truth = {{unit_at(0), 0}, {unit_at(5), 1}};
  b.predictions = {{unit_at(20, 20), 0, 0.8}, {unit_at(0), 0, 0.7}, {unit_at(30), 1, 0.85}};
  return {a, b};
}

inline constexpr double kClass0 = 5.0 / 6.0;
inline constexpr double kClass1AllPoint25 = 5.0 / 9.0;
inline constexpr double kClass1R40At25 = 13.0 / 24.0;
inline constexpr double kClass1AllPoint50 = 1.0 / 3.0;
inline constexpr double kClass1R40At50 = 13.0 / 40.0;

inline constexpr double kMapAllPoint25 = (kClass0 + kClass1AllPoint25) / 2.0;  // 25/36
inline constexpr double kMapR40At25 = (kClass0 + kClass1R40At25) / 2.0;        // 11/16
inline constexpr double kMapAllPoint50 = (kClass0 + kClass1AllPoint50) / 2.0;  // 7/12
inline constexpr double kMapR40At50 = (kClass0 + kClass1R40At50) / 2.0;        // 139/240

}  // namespace micro
