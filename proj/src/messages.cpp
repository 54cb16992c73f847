#include "vigil/messages.hpp"

namespace vigil::msg {

const char* to_string(EventCause cause) {
  switch (cause) {
    case EventCause::kNothingRelevant: return "nothing_relevant";
    case EventCause::kDetection: return "detection";
    case EventCause::kPossibleIntrusion: return "possible_intrusion";
    case EventCause::kPredictedEntry: return "predicted_entry";
    case EventCause::kConfirmedIntrusion: return "confirmed_intrusion";
    case EventCause::kBrokenPerimeter: return "broken_perimeter";
  }
  return "unknown";
}

}  // namespace vigil::msg
