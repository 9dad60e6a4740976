#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "deglif/graph.hpp"
#include "json.hpp"

namespace deglif {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void fail(const std::filesystem::path& file, int line,
                       const std::string& msg) {
  throw DeglifError(file.string() + ":" + std::to_string(line) + ": " + msg);
}

std::ifstream open_or_throw(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DeglifError("missing file: " + p.string());
  return in;
}

}  // namespace

Graph load_graph(const std::filesystem::path& dir) {
  const auto nodes_path = dir / "nodes.csv";
  const auto edges_path = dir / "edges.csv";
  const auto splits_path = dir / "splits.json";

  Graph g;
  std::unordered_map<long long, int> id_to_index;
  std::vector<std::vector<double>> feats;
  std::vector<int> labels;

  {
    auto in = open_or_throw(nodes_path);
    std::string line;
    int lineno = 1;
    if (!std::getline(in, line)) fail(nodes_path, 1, "empty file");
    auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
      fail(nodes_path, 1, "expected header 'id,label,f0,...'");
    }
    const std::size_t ncols = header.size();
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto row = split_csv(line);
      if (row.size() != ncols) fail(nodes_path, lineno, "malformed row");
      long long id;
      int label;
      std::vector<double> f(ncols - 2);
      try {
        id = std::stoll(row[0]);
        label = std::stoi(row[1]);
        for (std::size_t c = 2; c < ncols; ++c) f[c - 2] = std::stod(row[c]);
      } catch (const std::exception&) {
        fail(nodes_path, lineno, "malformed row");
      }
      if (id_to_index.count(id)) {
        fail(nodes_path, lineno, "duplicate node id " + std::to_string(id));
      }
      id_to_index[id] = static_cast<int>(g.original_ids.size());
      g.original_ids.push_back(id);
      labels.push_back(label);
      feats.push_back(std::move(f));
    }
  }

  g.n_nodes = static_cast<int>(labels.size());
  g.n_classes = labels.empty()
                    ? 1
                    : *std::max_element(labels.begin(), labels.end()) + 1;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) {
      fail(nodes_path, static_cast<int>(i) + 2, "label out of range");
    }
  }
  g.labels.resize(g.n_nodes);
  const int d = feats.empty() ? 0 : static_cast<int>(feats[0].size());
  g.features.resize(g.n_nodes, d);
  for (int i = 0; i < g.n_nodes; ++i) {
    g.labels[i] = labels[i];
    for (int c = 0; c < d; ++c) g.features(i, c) = feats[i][c];
  }

  {
    auto in = open_or_throw(edges_path);
    std::string line;
    int lineno = 1;
    if (!std::getline(in, line)) fail(edges_path, 1, "empty file");
    if (split_csv(line) != std::vector<std::string>{"src", "dst"}) {
      fail(edges_path, 1, "expected header 'src,dst'");
    }
    std::set<std::pair<int, int>> edge_set;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto row = split_csv(line);
      if (row.size() != 2) fail(edges_path, lineno, "malformed row");
      long long su, sv;
      try {
        su = std::stoll(row[0]);
        sv = std::stoll(row[1]);
      } catch (const std::exception&) {
        fail(edges_path, lineno, "malformed row");
      }
      auto iu = id_to_index.find(su);
      auto iv = id_to_index.find(sv);
      if (iu == id_to_index.end() || iv == id_to_index.end()) {
        fail(edges_path, lineno, "edge endpoint out of range");
      }
      int u = iu->second, v = iv->second;
      if (u == v) fail(edges_path, lineno, "self-loop not allowed");
      if (u > v) std::swap(u, v);
      edge_set.emplace(u, v);
    }
    g.edges.assign(edge_set.begin(), edge_set.end());
  }

  {
    auto in = open_or_throw(splits_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw DeglifError(splits_path.string() + ": " + e.what());
    }
    auto read_mask = [&](const char* key) {
      std::vector<int> out;
      if (!j.contains(key)) {
        throw DeglifError(splits_path.string() + ": missing field '" +
                          key + "'");
      }
      for (const auto& x : j.at(key)) {
        long long id = x.get<long long>();
        auto it = id_to_index.find(id);
        if (it == id_to_index.end()) {
          throw DeglifError(splits_path.string() + ": unknown node id " +
                            std::to_string(id) + " in '" + key + "'");
        }
        out.push_back(it->second);
      }
      std::sort(out.begin(), out.end());
      return out;
    };
    g.masks.train = read_mask("train");
    g.masks.validation = read_mask("validation");
    g.masks.test = read_mask("test");
    g.masks.clean = read_mask("clean");
  }

  g.validate();
  return g;
}

void save_graph(const Graph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "nodes.csv");
    out << "id,label";
    for (int c = 0; c < g.features.cols(); ++c) out << ",f" << c;
    out << "\n";
    out.precision(17);
    for (int i = 0; i < g.n_nodes; ++i) {
      long long id = g.original_ids.empty() ? i : g.original_ids[i];
      out << id << "," << g.labels[i];
      for (int c = 0; c < g.features.cols(); ++c) out << "," << g.features(i, c);
      out << "\n";
    }
  }
  {
    std::ofstream out(dir / "edges.csv");
    out << "src,dst\n";
    auto id_of = [&](int i) {
      return g.original_ids.empty() ? i : g.original_ids[i];
    };
    for (auto [u, v] : g.edges) out << id_of(u) << "," << id_of(v) << "\n";
  }
  {
    auto id_of = [&](int i) {
      return g.original_ids.empty() ? static_cast<long long>(i)
                                    : g.original_ids[i];
    };
    json j;
    for (auto [key, mask] :
         {std::pair{"train", &g.masks.train},
          std::pair{"validation", &g.masks.validation},
          std::pair{"test", &g.masks.test}, std::pair{"clean", &g.masks.clean}}) {
      json arr = json::array();
      for (int idx : *mask) arr.push_back(id_of(idx));
      j[key] = arr;
    }
    std::ofstream out(dir / "splits.json");
    out << j.dump(2) << "\n";
  }
}

}  // namespace deglif
