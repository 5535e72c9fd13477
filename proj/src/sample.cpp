#include "memsel/sample.hpp"

#include <algorithm>
#include <map>

namespace memsel {

std::vector<int> Sample::classes() const {
  std::vector<int> out;
  for (int l : labels) {
    if (l != 0) out.push_back(l);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

int Sample::count(int class_id) const {
  return static_cast<int>(std::count(labels.begin(), labels.end(), class_id));
}

int Sample::primary_class() const {
  std::map<int, int> hist;
  for (int l : labels) {
    if (l != 0) ++hist[l];
  }
  int best = 0;
  int best_count = 0;
  for (const auto& [c, n] : hist) {
    if (n > best_count) {
      best = c;
      best_count = n;
    }
  }
  return best;
}

}  // namespace memsel
