#pragma once

#include <cstddef>

#include "saf/tensor.hpp"

namespace saf {

/// One supervised example: an input window of raw covariates and the
/// horizon of target values that follows it.
///
/// `window` is m x d_x (raw features only; the error channel, when a model
/// uses one, is appended at encode time).  `target` is the h future values
/// of the designated target series.  `statics` is the entity's static
/// feature vector, empty when the dataset has none.  `entity` indexes the
/// owning dataset's entity list and `anchor` is the prediction time t: the
/// window covers [t-m+1, t] and the target covers [t+1, t+h].
struct WindowSample {
    Tensor window;
    Tensor statics;
    Tensor target;
    std::size_t entity = 0;
    std::size_t anchor = 0;
};

} // namespace saf
