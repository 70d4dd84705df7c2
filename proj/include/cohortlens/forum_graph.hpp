#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "cohortlens/ingest.hpp"

namespace cohortlens {

/// A: a reply/comment links to every earlier author in the thread.
/// B: a reply links to the thread head, a comment to the reply it annotates.
enum class GraphMethod { A, B };

std::string_view to_string(GraphMethod m);  // "A", "B"
GraphMethod parse_graph_method(std::string_view s);

/// Weighted directed graph over forum participants. Node ids are sorted; arcs are sorted
/// by (src, dst) and carry the number of aggregated links.
class SocialGraph {
 public:
  struct Node {
    std::string id;
    Role role = Role::Student;
  };
  struct Arc {
    std::size_t src;
    std::size_t dst;
    double weight;
  };

  SocialGraph() = default;

  /// Builds from explicit data. Arcs with equal endpoints are summed; self-loops and
  /// non-positive weights are rejected.
  static SocialGraph from_arcs(GraphMethod method, TimeWindow slice, std::vector<Node> nodes,
                               const std::vector<std::tuple<std::string, std::string, double>>& arcs);

  GraphMethod method() const { return method_; }
  const TimeWindow& slice() const { return slice_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Arc>& arcs() const { return arcs_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::optional<std::size_t> index_of(std::string_view id) const;
  double total_weight() const;

  /// W(u, v) = weight of arc u -> v.
  Eigen::SparseMatrix<double> adjacency() const;

 private:
  GraphMethod method_ = GraphMethod::A;
  TimeWindow slice_{};
  std::vector<Node> nodes_;
  std::vector<Arc> arcs_;
};

/// Posts outside `slice` are ignored. Expects anonymity-filtered threads.
SocialGraph build_graph_a(const ThreadSet& threads, TimeWindow slice);
SocialGraph build_graph_b(const ThreadSet& threads, TimeWindow slice);
SocialGraph build_graph(const ThreadSet& threads, TimeWindow slice, GraphMethod method);

/// Exact, unnormalized shortest-path betweenness on the unweighted arc structure
/// (Brandes' dependency accumulation). Indexed like `g.nodes()`.
Eigen::VectorXd betweenness(const SocialGraph& g);

struct HitsResult {
  Eigen::VectorXd hub;
  Eigen::VectorXd authority;
  int iterations = 0;
  bool converged = false;
  bool empty_graph = false;  // no arcs: scores are all zero
};

/// Kleinberg's mutually reinforcing iteration on the weighted adjacency, L2-normalized each
/// step, starting from a uniform hub vector.
HitsResult hits(const SocialGraph& g, double tol = 1e-8, int max_iter = 200);

struct GraphFeatureRow {
  static constexpr std::size_t kCount = 5;

  std::string student_id;
  double in_degree = 0;
  double out_degree = 0;
  double betweenness = 0;
  double hub_score = 0;
  double authority_score = 0;

  std::array<double, kCount> values() const {
    return {in_degree, out_degree, betweenness, hub_score, authority_score};
  }
  static const std::array<std::string_view, kCount>& names();
};

/// One row per id in `students` (order preserved); ids absent from the graph get zeros.
/// With an empty `students`, one row per graph node.
std::vector<GraphFeatureRow> graph_features(const SocialGraph& g,
                                            std::span<const std::string> students = {});

/// CSV: src,dst,weight,method,slice
std::string graph_arcs_csv(const SocialGraph& g, std::string_view slice_label);
/// JSON: node/arc counts, per-role node counts, total weight.
std::string graph_summary_json(const SocialGraph& g, std::string_view slice_label);

}  // namespace cohortlens
