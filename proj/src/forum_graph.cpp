#include "cohortlens/forum_graph.hpp"

#include <algorithm>
#include <deque>
#include <map>

#include <json.hpp>

#include "cohortlens/csv.hpp"
#include "cohortlens/error.hpp"

namespace cohortlens {

std::string_view to_string(GraphMethod m) { return m == GraphMethod::A ? "A" : "B"; }

GraphMethod parse_graph_method(std::string_view s) {
  if (s == "A" || s == "a") return GraphMethod::A;
  if (s == "B" || s == "b") return GraphMethod::B;
  throw ConfigError("unknown graph method '" + std::string(s) + "' (expected a or b)");
}

std::optional<std::size_t> SocialGraph::index_of(std::string_view id) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                             [](const Node& n, std::string_view v) { return n.id < v; });
  if (it == nodes_.end() || it->id != id) return std::nullopt;
  return static_cast<std::size_t>(it - nodes_.begin());
}

double SocialGraph::total_weight() const {
  double w = 0;
  for (const auto& a : arcs_) w += a.weight;
  return w;
}

Eigen::SparseMatrix<double> SocialGraph::adjacency() const {
  const auto n = static_cast<Eigen::Index>(nodes_.size());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(arcs_.size());
  for (const auto& a : arcs_)
    triplets.emplace_back(static_cast<Eigen::Index>(a.src), static_cast<Eigen::Index>(a.dst), a.weight);
  Eigen::SparseMatrix<double> w(n, n);
  w.setFromTriplets(triplets.begin(), triplets.end());
  return w;
}

SocialGraph SocialGraph::from_arcs(GraphMethod method, TimeWindow slice, std::vector<Node> nodes,
                                   const std::vector<std::tuple<std::string, std::string, double>>& arcs) {
  SocialGraph g;
  g.method_ = method;
  g.slice_ = slice;
  std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (nodes[i].id == nodes[i - 1].id) throw ContractError("duplicate graph node '" + nodes[i].id + "'");
  g.nodes_ = std::move(nodes);

  std::map<std::pair<std::size_t, std::size_t>, double> agg;
  for (const auto& [src, dst, w] : arcs) {
    const auto s = g.index_of(src);
    const auto d = g.index_of(dst);
    if (!s || !d) throw ContractError("arc " + src + "->" + dst + " references an unknown node");
    if (*s == *d) throw ContractError("self-loop on '" + src + "'");
    if (!(w > 0)) throw ContractError("arc weights must be positive");
    agg[{*s, *d}] += w;
  }
  g.arcs_.reserve(agg.size());
  for (const auto& [key, w] : agg) g.arcs_.push_back({key.first, key.second, w});
  return g;
}

namespace {

struct GraphBuilder {
  std::map<std::string, Role> participants;
  std::vector<std::tuple<std::string, std::string, double>> links;

  void participant(const Post& p) {
    if (p.author_id) participants.emplace(*p.author_id, p.role);
  }
  void link(const Post& from, const Post& to) {
    if (!from.author_id || !to.author_id || *from.author_id == *to.author_id) return;
    links.emplace_back(*from.author_id, *to.author_id, 1.0);
  }
  SocialGraph finish(GraphMethod method, TimeWindow slice) const {
    std::vector<SocialGraph::Node> nodes;
    nodes.reserve(participants.size());
    for (const auto& [id, role] : participants) nodes.push_back({id, role});
    return SocialGraph::from_arcs(method, slice, std::move(nodes), links);
  }
};

}  // namespace

SocialGraph build_graph_a(const ThreadSet& threads, TimeWindow slice) {
  GraphBuilder b;
  std::vector<const Post*> posts;
  for (const auto& t : threads.threads) {
    // Structural order: head, then each reply followed by its comments.
    posts.clear();
    posts.push_back(&t.head);
    for (const auto& r : t.replies) {
      posts.push_back(&r.post);
      for (const auto& c : r.comments) posts.push_back(&c);
    }
    std::vector<std::pair<Timestamp, std::size_t>> order;  // (time, structural index), in-slice only
    for (std::size_t i = 0; i < posts.size(); ++i)
      if (slice.contains(posts[i]->timestamp)) {
        order.emplace_back(posts[i]->timestamp, i);
        b.participant(*posts[i]);
      }
    std::sort(order.begin(), order.end());
    for (std::size_t k = 0; k < order.size(); ++k) {
      const std::size_t idx = order[k].second;
      if (idx == 0) continue;  // the head starts the conversation
      for (std::size_t e = 0; e < k; ++e) b.link(*posts[idx], *posts[order[e].second]);
    }
  }
  return b.finish(GraphMethod::A, slice);
}

SocialGraph build_graph_b(const ThreadSet& threads, TimeWindow slice) {
  GraphBuilder b;
  for (const auto& t : threads.threads) {
    const bool head_in = slice.contains(t.head.timestamp);
    if (head_in) b.participant(t.head);
    for (const auto& r : t.replies) {
      const bool reply_in = slice.contains(r.post.timestamp);
      if (reply_in) {
        b.participant(r.post);
        if (head_in) b.link(r.post, t.head);
      }
      for (const auto& c : r.comments) {
        if (!slice.contains(c.timestamp)) continue;
        b.participant(c);
        if (reply_in) b.link(c, r.post);
      }
    }
  }
  return b.finish(GraphMethod::B, slice);
}

SocialGraph build_graph(const ThreadSet& threads, TimeWindow slice, GraphMethod method) {
  return method == GraphMethod::A ? build_graph_a(threads, slice) : build_graph_b(threads, slice);
}

Eigen::VectorXd betweenness(const SocialGraph& g) {
  const std::size_t n = g.node_count();
  std::vector<std::vector<std::size_t>> out(n);
  for (const auto& a : g.arcs()) out[a.src].push_back(a.dst);

  Eigen::VectorXd cb = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  std::vector<std::vector<std::size_t>> pred(n);
  std::vector<double> sigma(n), delta(n);
  std::vector<long> dist(n);
  std::vector<std::size_t> stack;
  std::deque<std::size_t> queue;

  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t v = 0; v < n; ++v) {
      pred[v].clear();
      sigma[v] = 0;
      delta[v] = 0;
      dist[v] = -1;
    }
    stack.clear();
    sigma[s] = 1;
    dist[s] = 0;
    queue.push_back(s);
    while (!queue.empty()) {
      const std::size_t v = queue.front();
      queue.pop_front();
      stack.push_back(v);
      for (std::size_t w : out[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          queue.push_back(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          pred[w].push_back(v);
        }
      }
    }
    while (!stack.empty()) {
      const std::size_t w = stack.back();
      stack.pop_back();
      for (std::size_t v : pred[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) cb[static_cast<Eigen::Index>(w)] += delta[w];
    }
  }
  return cb;
}

HitsResult hits(const SocialGraph& g, double tol, int max_iter) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  HitsResult r;
  r.hub = Eigen::VectorXd::Zero(n);
  r.authority = Eigen::VectorXd::Zero(n);
  if (g.arcs().empty()) {
    r.empty_graph = true;
    return r;
  }
  const Eigen::SparseMatrix<double> w = g.adjacency();
  const Eigen::SparseMatrix<double> wt = w.transpose();
  Eigen::VectorXd hub = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  Eigen::VectorXd auth = Eigen::VectorXd::Zero(n);
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd next_auth = wt * hub;
    next_auth /= next_auth.norm();
    Eigen::VectorXd next_hub = w * next_auth;
    next_hub /= next_hub.norm();
    const double change = std::max((next_hub - hub).cwiseAbs().maxCoeff(),
                                   (next_auth - auth).cwiseAbs().maxCoeff());
    hub = std::move(next_hub);
    auth = std::move(next_auth);
    r.iterations = it;
    if (change < tol) {
      r.converged = true;
      break;
    }
  }
  r.hub = std::move(hub);
  r.authority = std::move(auth);
  return r;
}

const std::array<std::string_view, GraphFeatureRow::kCount>& GraphFeatureRow::names() {
  static const std::array<std::string_view, kCount> n = {"in_degree", "out_degree", "betweenness",
                                                         "hub_score", "authority_score"};
  return n;
}

std::vector<GraphFeatureRow> graph_features(const SocialGraph& g, std::span<const std::string> students) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  Eigen::VectorXd in = Eigen::VectorXd::Zero(n), out = Eigen::VectorXd::Zero(n);
  for (const auto& a : g.arcs()) {
    out[static_cast<Eigen::Index>(a.src)] += a.weight;
    in[static_cast<Eigen::Index>(a.dst)] += a.weight;
  }
  const Eigen::VectorXd bc = betweenness(g);
  const HitsResult h = hits(g);

  const auto row_for = [&](const std::string& id) {
    GraphFeatureRow row;
    row.student_id = id;
    if (auto i = g.index_of(id)) {
      const auto k = static_cast<Eigen::Index>(*i);
      row.in_degree = in[k];
      row.out_degree = out[k];
      row.betweenness = bc[k];
      row.hub_score = h.hub[k];
      row.authority_score = h.authority[k];
    }
    return row;
  };

  std::vector<GraphFeatureRow> rows;
  if (students.empty()) {
    for (const auto& node : g.nodes()) rows.push_back(row_for(node.id));
  } else {
    rows.reserve(students.size());
    for (const auto& id : students) rows.push_back(row_for(id));
  }
  return rows;
}

std::string graph_arcs_csv(const SocialGraph& g, std::string_view slice_label) {
  std::string out = "src,dst,weight,method,slice\n";
  for (const auto& a : g.arcs()) {
    out += csv::escape(g.nodes()[a.src].id) + ',' + csv::escape(g.nodes()[a.dst].id) + ',' +
           csv::format_number(a.weight) + ',' + std::string(to_string(g.method())) + ',' +
           csv::escape(slice_label) + '\n';
  }
  return out;
}

std::string graph_summary_json(const SocialGraph& g, std::string_view slice_label) {
  nlohmann::ordered_json j;
  j["method"] = to_string(g.method());
  j["slice"] = slice_label;
  j["window"] = {format_iso8601(g.slice().begin), format_iso8601(g.slice().end)};
  j["nodes"] = g.node_count();
  j["arcs"] = g.arcs().size();
  j["total_weight"] = g.total_weight();
  nlohmann::ordered_json roles;
  for (Role r : {Role::Student, Role::TA, Role::Instructor}) {
    std::size_t c = 0;
    for (const auto& node : g.nodes()) c += node.role == r;
    roles[std::string(to_string(r))] = c;
  }
  j["roles"] = std::move(roles);
  return j.dump(2) + "\n";
}

}  // namespace cohortlens
