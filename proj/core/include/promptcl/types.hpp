// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <string>

namespace promptcl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class TaskType { ner, classification, summarization };

std::string to_string(TaskType type);
TaskType task_type_from_string(const std::string& name);

}  // namespace promptcl
