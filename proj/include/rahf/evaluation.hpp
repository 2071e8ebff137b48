// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>

#include "rahf/feedback.hpp"
#include "rahf/image.hpp"
#include "rahf/metrics.hpp"
#include "rahf/model.hpp"

namespace rahf {

/// Runs the model on `image` (resized to the model input) and packs every
/// output into a sample at the image's own resolution. Heatmaps or scores
/// the model did not emit stay zero.
ConsolidatedSample predict_sample(const RahfModel& model, const std::string& image_id, const Image& image,
                                  const std::string& prompt, std::optional<Task> task = {},
                                  std::vector<std::string>* decoded_words = nullptr);

/// Pairs predictions with ground truth by image_id; unmatched entries on
/// either side are ignored. Ground-truth points serve as fixations.
metrics::EvalReport evaluate_predictions(std::span<const ConsolidatedSample> pred,
                                         std::span<const ConsolidatedSample> gt);

}  // namespace rahf
