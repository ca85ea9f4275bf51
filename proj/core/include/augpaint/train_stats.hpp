#pragma once

#include <vector>

namespace augpaint {

struct TrainStats {
    std::vector<float> losses;  // last loss of each epoch
    float final_loss = 0.0f;
    int steps = 0;
};

}  // namespace augpaint
