#include "mtpv/error.hpp"

namespace mtpv {

NonFiniteLossError::NonFiniteLossError(std::size_t step, std::size_t batch_id,
                                       const std::string& detail)
    : Error("non-finite loss at step " + std::to_string(step) + ", batch " +
            std::to_string(batch_id) + ": " + detail),
      step_(step),
      batch_id_(batch_id) {}

}  // namespace mtpv
