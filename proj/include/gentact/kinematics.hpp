// Minimal rigid-body kinematics for skin-carrying manipulators: a serial
// chain of revolute/prismatic joints with static offsets, joint limits, and
// per-link skin units whose sensors resolve to world poses through forward
// kinematics.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gentact/capacitance.hpp"
#include "gentact/math.hpp"

namespace gentact {

struct JointLimitError : std::runtime_error {
  int joint_index;
  JointLimitError(int index, double value)
      : std::runtime_error("joint " + std::to_string(index) + " value " +
                           std::to_string(value) + " violates its limits"),
        joint_index(index) {}
};

enum class JointType { Revolute, Prismatic };

// One chain element: a fixed offset from the parent frame followed by the
// joint motion (rotation about `axis` or translation along it).
struct Joint {
  JointType type = JointType::Revolute;
  Vec3 axis{0, 0, 1};
  Mat4 static_offset;
  double lower = -3.141592653589793;
  double upper = 3.141592653589793;
};

struct KinematicChain {
  std::vector<Joint> joints;
  // skins[i] rides on link i (the frame after joint i); geometry is
  // expressed in that link's frame.
  std::vector<std::vector<SkinUnit>> link_skins;
};

struct SensorWorldPose {
  int link = 0;
  int skin_index = 0;
  int sensor_index = 0;
  int electrode_id = 0;
  Vec3 center;
  Vec3 normal;
};

struct FkResult {
  std::vector<Mat4> link_transforms;  // world_from_link, one per joint
  Mat4 end_effector;                  // last link transform
  std::vector<SensorWorldPose> sensor_poses;
};

inline Mat4 joint_motion(const Joint& joint, double q) {
  if (joint.type == JointType::Revolute) return Mat4::rotation(joint.axis, q);
  Vec3 dir = normalized(joint.axis);
  return Mat4::translation(dir * q);
}

// Composes offsets and joint motions base-to-tip and resolves every attached
// sensor into world coordinates.
inline FkResult forward_kinematics(const KinematicChain& chain,
                                   const std::vector<double>& q) {
  if (q.size() != chain.joints.size())
    throw std::invalid_argument("forward_kinematics: joint value count mismatch");
  if (!chain.link_skins.empty() && chain.link_skins.size() != chain.joints.size())
    throw std::invalid_argument(
        "forward_kinematics: link_skins must be empty or one entry per link");

  FkResult fk;
  Mat4 t;
  for (size_t i = 0; i < chain.joints.size(); ++i) {
    const Joint& joint = chain.joints[i];
    if (q[i] < joint.lower || q[i] > joint.upper)
      throw JointLimitError(static_cast<int>(i), q[i]);
    t = t * joint.static_offset * joint_motion(joint, q[i]);
    fk.link_transforms.push_back(t);
  }
  if (!fk.link_transforms.empty()) fk.end_effector = fk.link_transforms.back();

  for (size_t li = 0; li < chain.link_skins.size(); ++li) {
    const Mat4& world_from_link = fk.link_transforms[li];
    for (size_t si = 0; si < chain.link_skins[li].size(); ++si) {
      const SkinUnit& skin = chain.link_skins[li][si];
      for (size_t e = 0; e < skin.sensors.size(); ++e) {
        const Electrode& el = skin.sensors[e].electrode;
        SensorWorldPose pose;
        pose.link = static_cast<int>(li);
        pose.skin_index = static_cast<int>(si);
        pose.sensor_index = static_cast<int>(e);
        pose.electrode_id = el.id;
        pose.center = world_from_link.transform_point(el.center);
        pose.normal = normalized(world_from_link.transform_vector(el.normal));
        fk.sensor_poses.push_back(pose);
      }
    }
  }
  return fk;
}

}  // namespace gentact
