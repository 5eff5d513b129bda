#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "simagent/dynamics.hpp"
#include "simagent/scenario.hpp"
#include "simagent/scenario_io.hpp"

using namespace simagent;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("simagent_" + name)).string();
}

GeneratorConfig small(RoadLayout layout, bool conflict = false) {
  GeneratorConfig cfg;
  cfg.layout = layout;
  cfg.t_pred = 20;
  cfg.conflict = conflict;
  return cfg;
}

}  // namespace

TEST(Generator, Deterministic) {
  for (auto layout : {RoadLayout::straight, RoadLayout::curved, RoadLayout::intersection}) {
    const Scenario a = generate_scenario(7, small(layout));
    const Scenario b = generate_scenario(7, small(layout));
    EXPECT_EQ(a, b);
    EXPECT_NE(a, generate_scenario(8, small(layout)));
  }
}

TEST(Generator, SchemaShape) {
  const Scenario sc = generate_scenario(1, small(RoadLayout::intersection));
  EXPECT_EQ(sc.num_agents(), 8);
  EXPECT_EQ(sc.t_prev, 10);
  for (const Agent& a : sc.agents) {
    EXPECT_EQ(a.history.size(), 11u);
    EXPECT_EQ(a.future.size(), 20u);
  }
  EXPECT_NO_THROW(sc.validate());
}

TEST(Generator, RejectsBadConfig) {
  GeneratorConfig cfg;
  cfg.num_agents = kMaxAgents + 1;
  EXPECT_THROW(generate_scenario(0, cfg), std::invalid_argument);
  cfg.num_agents = 4;
  cfg.t_pred = 0;
  EXPECT_THROW(generate_scenario(0, cfg), std::invalid_argument);
}

TEST(Generator, SingleAgentConstantSpeed) {
  GeneratorConfig cfg = small(RoadLayout::straight);
  cfg.num_agents = 1;
  cfg.constant_speed = 9.0;
  const Scenario sc = generate_scenario(3, cfg);
  Vec2 prev = sc.agents[0].current().position;
  for (const FuturePoint& f : sc.agents[0].future) {
    EXPECT_NEAR((f.position - prev).norm(), 0.9, 1e-9);
    prev = f.position;
  }
}

TEST(Generator, ConflictProducesCrossingPaths) {
  // Exhaustive pairwise path-proximity test over a small corpus.
  for (auto layout : {RoadLayout::straight, RoadLayout::curved, RoadLayout::intersection}) {
    const Scenario sc = generate_scenario(7, small(layout, true));
    bool found = false;
    for (int i = 0; i < sc.num_agents() && !found; ++i) {
      for (int j = i + 1; j < sc.num_agents() && !found; ++j) {
        for (const auto& fi : sc.agents[i].future) {
          for (const auto& fj : sc.agents[j].future) {
            if ((fi.position - fj.position).norm() <= 2.0) {
              found = true;
              break;
            }
          }
          if (found) break;
        }
      }
    }
    EXPECT_TRUE(found) << sc.id;
  }
}

TEST(Generator, LoggedVelocityMatchesPositions) {
  for (auto layout : {RoadLayout::straight, RoadLayout::curved, RoadLayout::intersection}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Scenario sc = generate_scenario(seed, small(layout, seed % 2 == 0));
      for (const Agent& a : sc.agents) {
        for (std::size_t k = 1; k < a.history.size(); ++k) {
          const Vec2 fd = (a.history[k].position - a.history[k - 1].position) / sc.dt;
          EXPECT_NEAR(fd.x, a.history[k].velocity.x, 1e-6);
          EXPECT_NEAR(fd.y, a.history[k].velocity.y, 1e-6);
        }
        // First future step continues the logged velocity up to one grid-bounded acceleration step.
        const Vec2 v1 = (a.future[0].position - a.current().position) / sc.dt;
        const Vec2 dv = v1 - a.current().velocity;
        EXPECT_LE(std::abs(dv.x), 5.5 * sc.dt + 1e-6);
        EXPECT_LE(std::abs(dv.y), 5.5 * sc.dt + 1e-6);
      }
    }
  }
}

TEST(Generator, NoLoggedOverlaps) {
  for (auto layout : {RoadLayout::straight, RoadLayout::curved, RoadLayout::intersection}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      EXPECT_FALSE(has_gt_overlap(generate_scenario(seed, small(layout, seed % 3 == 0))));
    }
  }
}

TEST(Generator, AgentsStayOnRoad) {
  for (auto layout : {RoadLayout::straight, RoadLayout::curved, RoadLayout::intersection}) {
    const Scenario sc = generate_scenario(2, small(layout));
    for (const Agent& a : sc.agents) {
      for (const auto& f : a.future) EXPECT_GT(geometry::signed_distance_to_road_edge(f.position, sc.map), 0.5);
    }
  }
}

TEST(ScenarioIo, RoundTrip) {
  std::vector<Scenario> scenarios;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    scenarios.push_back(generate_scenario(seed, small(static_cast<RoadLayout>(seed % 3), seed % 4 == 0)));
  }
  const std::string path = temp_path("roundtrip.jsonl");
  io::write_scenarios(path, scenarios);
  EXPECT_EQ(io::read_scenarios(path), scenarios);
  std::remove(path.c_str());
}

TEST(ScenarioIo, TruncatedLastLineNamesRecord) {
  const std::string path = temp_path("truncated.jsonl");
  io::write_scenarios(path, {generate_scenario(1, small(RoadLayout::straight)),
                             generate_scenario(2, small(RoadLayout::straight))});
  std::string text;
  {
    std::ifstream in(path);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  text.resize(text.size() - 40);
  {
    std::ofstream out(path, std::ios::trunc);
    out << text;
  }
  try {
    io::read_scenarios(path);
    FAIL() << "expected a format error";
  } catch (const io::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos) << e.what();
  }
  std::remove(path.c_str());
}

TEST(ScenarioIo, SchemaVersionMismatch) {
  auto j = io::to_json(generate_scenario(1, small(RoadLayout::straight)));
  j["schema_version"] = 0;
  const std::string path = temp_path("version.jsonl");
  {
    std::ofstream out(path, std::ios::trunc);
    out << j.dump() << '\n';
  }
  try {
    io::read_scenarios(path);
    FAIL() << "expected a version error";
  } catch (const io::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("schema_version 0"), std::string::npos) << e.what();
  }
  std::remove(path.c_str());
}
