#include <benchmark/benchmark.h>

#include "bnsp/simulator.hpp"

namespace {

using namespace bnsp;

std::vector<Track> random_tracks(int agents, int frames) {
    RngStream rng(17);
    std::vector<Track> tracks;
    for (int a = 0; a < agents; ++a) {
        Track t;
        t.id = a;
        Vec2 p(rng.uniform(0.0, 400.0), rng.uniform(0.0, 400.0));
        Vec2 v(rng.normal(0.0, 4.0), rng.normal(0.0, 4.0));
        for (int f = 0; f < frames; ++f) {
            t.frames.push_back(f);
            t.positions.push_back(p);
            p += v * 0.4;
        }
        tracks.push_back(std::move(t));
    }
    return tracks;
}

void BM_CollisionStats(benchmark::State& state) {
    const auto tracks = random_tracks(static_cast<int>(state.range(0)), 75);
    const std::vector<std::pair<double, double>> intervals{{0.0, 8.0}, {4.0, 12.0}, {8.0, 16.0}};
    for (auto _ : state) {
        CollisionReport report = collision_stats(tracks, 7.5, intervals, 0.4);
        benchmark::DoNotOptimize(report);
    }
}
BENCHMARK(BM_CollisionStats)->Arg(20)->Arg(100)->Arg(300);

}  // namespace
