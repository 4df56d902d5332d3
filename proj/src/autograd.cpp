#include "mtu/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace mtu {

namespace {
thread_local bool t_grad_enabled = true;
}

bool GradMode::enabled() noexcept { return t_grad_enabled; }
void GradMode::set_enabled(bool on) noexcept { t_grad_enabled = on; }

template <typename T>
void backward(const Var<T>& root) {
  if (!root.defined() || !root.requires_grad()) return;
  if (root.value().numel() != 1) throw std::invalid_argument("backward: root must be a scalar");

  // Iterative post-order DFS; graphs from long unrolls are deep.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

}  // namespace mtu
