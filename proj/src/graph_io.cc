/*
 * Copyright 2025 Stanford University, NVIDIA Corporation
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Text formats for task graphs: a JSON document and Graphviz DOT.

#include "taskdual/graph.h"

#include <json.hpp>

#include <sstream>

using json = nlohmann::ordered_json;

namespace taskdual {

  ParseError::ParseError(const std::string &msg, std::size_t line, std::size_t column)
    : ValidationError(msg + " (line " + std::to_string(line) + ", column " +
                      std::to_string(column) + ")")
    , line_(line)
    , column_(column)
  {}

  namespace {

    json alloc_to_json(const Allocation &a)
    {
      return json{{"memory", a.memory.value()}, {"offset", a.offset}, {"size", a.size}};
    }

    Allocation alloc_from_json(const json &j)
    {
      return Allocation{MemoryId(j.at("memory").get<std::uint32_t>()),
                        j.at("offset").get<std::size_t>(), j.at("size").get<std::size_t>()};
    }

    EdgeKind edge_kind_from(const std::string &s)
    {
      if(s == "host")
        return EdgeKind::HOST;
      if(s == "async")
        return EdgeKind::ASYNC;
      if(s == "sync")
        return EdgeKind::SYNC;
      throw ValidationError("unknown edge kind '" + s + "'");
    }

    std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte)
    {
      std::size_t line = 1, col = 1;
      for(std::size_t i = 0; i < byte && i < text.size(); i++) {
        if(text[i] == '\n') {
          line++;
          col = 1;
        } else {
          col++;
        }
      }
      return {line, col};
    }

    GraphNode node_from_json(const json &j)
    {
      GraphNode node;
      node.id = j.at("id").get<NodeId>();
      if(j.contains("name"))
        node.name = j.at("name").get<std::string>();
      const std::string kind = j.at("kind").get<std::string>();
      if(kind == "task") {
        TaskNode t;
        t.proc = ProcessorId(j.at("proc").get<std::uint32_t>());
        t.tid = j.at("tid").get<TaskId>();
        t.args = from_hex(j.value("args_hex", std::string()));
        if(j.contains("device_work")) {
          double us = j.at("device_work").at("duration_us").get<double>();
          t.device_work = Nanos(std::llround(us * 1000.0));
        }
        node.kind = std::move(t);
      } else if(kind == "copy") {
        CopyNode c{alloc_from_json(j.at("src")), alloc_from_json(j.at("dst"))};
        if(j.contains("channel")) {
          auto ch = j.at("channel").get<std::vector<std::uint32_t>>();
          if(ch.size() != 2 || ch[0] != c.src.memory.value() || ch[1] != c.dst.memory.value())
            throw ValidationError("copy node " + std::to_string(node.id) +
                                  " channel disagrees with its allocations");
        }
        node.kind = c;
      } else if(kind == "ext_precond") {
        node.kind = ExtPrecondNode{j.at("index").get<std::uint32_t>()};
      } else if(kind == "ext_postcond") {
        node.kind = ExtPostcondNode{j.at("index").get<std::uint32_t>()};
      } else if(kind == "async") {
        node.kind = AsyncNode{j.at("host").get<NodeId>()};
      } else {
        throw ValidationError("unknown node kind '" + kind + "'");
      }
      return node;
    }

  } // namespace

  std::string to_json(const TaskGraph &g)
  {
    json nodes = json::array();
    for(const GraphNode &n : g.nodes()) {
      json j;
      j["id"] = n.id;
      std::visit(
          [&](const auto &k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr(std::is_same_v<K, TaskNode>) {
              j["kind"] = "task";
              j["proc"] = k.proc.value();
              j["tid"] = k.tid;
              j["args_hex"] = to_hex(k.args);
              if(k.device_work)
                j["device_work"] = json{{"duration_us", k.device_work->count() / 1000.0}};
            } else if constexpr(std::is_same_v<K, CopyNode>) {
              j["kind"] = "copy";
              j["channel"] = {k.src.memory.value(), k.dst.memory.value()};
              j["src"] = alloc_to_json(k.src);
              j["dst"] = alloc_to_json(k.dst);
            } else if constexpr(std::is_same_v<K, ExtPrecondNode>) {
              j["kind"] = "ext_precond";
              j["index"] = k.index;
            } else if constexpr(std::is_same_v<K, ExtPostcondNode>) {
              j["kind"] = "ext_postcond";
              j["index"] = k.index;
            } else {
              j["kind"] = "async";
              j["host"] = k.host;
            }
          },
          n.kind);
      if(!n.name.empty())
        j["name"] = n.name;
      nodes.push_back(std::move(j));
    }
    json edges = json::array();
    for(const Edge &e : g.edges())
      edges.push_back(json{{"src", e.src}, {"dst", e.dst}, {"kind", to_string(e.kind)}});
    json doc;
    doc["version"] = GRAPH_FORMAT_VERSION;
    doc["nodes"] = std::move(nodes);
    doc["edges"] = std::move(edges);
    doc["ext_preconds"] = g.ext_precond_count();
    doc["ext_postconds"] = g.ext_postcond_count();
    return doc.dump(2) + "\n";
  }

  TaskGraph from_json(std::string_view text)
  {
    json doc;
    try {
      doc = json::parse(text.begin(), text.end());
    } catch(const json::parse_error &e) {
      auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
      throw ParseError("malformed graph document: " + std::string(e.what()), line, col);
    }
    std::vector<GraphNode> nodes;
    std::vector<Edge> edges;
    try {
      int version = doc.at("version").get<int>();
      if(version != GRAPH_FORMAT_VERSION)
        throw ValidationError("unsupported graph format version " + std::to_string(version));
      for(const json &j : doc.at("nodes"))
        nodes.push_back(node_from_json(j));
      for(const json &j : doc.at("edges"))
        edges.push_back(Edge{j.at("src").get<NodeId>(), j.at("dst").get<NodeId>(),
                             edge_kind_from(j.value("kind", std::string("host")))});
    } catch(const json::exception &e) {
      throw ValidationError(std::string("invalid graph document: ") + e.what());
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const GraphNode &a, const GraphNode &b) { return a.id < b.id; });
    TaskGraph g = TaskGraph::build(std::move(nodes), std::move(edges));
    if(doc.contains("ext_preconds") &&
       doc["ext_preconds"].get<std::uint32_t>() != g.ext_precond_count())
      throw ValidationError("ext_preconds count disagrees with nodes");
    if(doc.contains("ext_postconds") &&
       doc["ext_postconds"].get<std::uint32_t>() != g.ext_postcond_count())
      throw ValidationError("ext_postconds count disagrees with nodes");
    return g;
  }

  std::string to_dot(const TaskGraph &g)
  {
    std::ostringstream os;
    os << "digraph taskgraph {\n";
    for(const GraphNode &n : g.nodes()) {
      os << "  n" << n.id << " [label=\"" << n.label();
      std::visit(
          [&](const auto &k) {
            using K = std::decay_t<decltype(k)>;
            if constexpr(std::is_same_v<K, TaskNode>)
              os << "\\nP" << k.proc.value() << " t" << k.tid << "\", shape=box";
            else if constexpr(std::is_same_v<K, CopyNode>)
              os << "\\nM" << k.src.memory.value() << "->M" << k.dst.memory.value()
                 << "\", shape=ellipse";
            else if constexpr(std::is_same_v<K, ExtPrecondNode>)
              os << "\\npre " << k.index << "\", shape=invtriangle";
            else if constexpr(std::is_same_v<K, ExtPostcondNode>)
              os << "\\npost " << k.index << "\", shape=triangle";
            else
              os << "\", shape=box, style=dashed";
          },
          n.kind);
      os << "];\n";
    }
    for(const Edge &e : g.edges()) {
      os << "  n" << e.src << " -> n" << e.dst;
      if(e.kind == EdgeKind::ASYNC)
        os << " [style=dashed]";
      else if(e.kind == EdgeKind::SYNC)
        os << " [style=dashed, color=red]";
      os << ";\n";
    }
    os << "}\n";
    return os.str();
  }

} // namespace taskdual
