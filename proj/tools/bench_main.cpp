#include <chrono>
#include <cstdio>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "aero/binio.hpp"
#include "aero/dataset.hpp"
#include "aero/diffusion.hpp"
#include "aero/environment.hpp"
#include "aero/guidance.hpp"
#include "aero/model.hpp"

using namespace aero;

namespace
{

    double now()
    {
        using clock = std::chrono::steady_clock;
        return std::chrono::duration<double>(clock::now().time_since_epoch())
            .count();
    }

    void setThreads(int n)
    {
#ifdef _OPENMP
        omp_set_num_threads(n);
#else
        (void)n;
#endif
    }

    int maxThreads()
    {
#ifdef _OPENMP
        return omp_get_max_threads();
#else
        return 1;
#endif
    }

    uint64_t hashGrid(const SdfGrid &g)
    {
        Fnv1a h;
        h.add(g.values().data(), g.values().size() * sizeof(float));
        return h.value();
    }

    uint64_t hashPrims(const std::vector<Primitive> &prims)
    {
        Fnv1a h;
        for (const Primitive &p : prims)
        {
            for (const StateFrame &f : p.frames)
            {
                for (int a = 0; a < 3; ++a)
                {
                    h.addF64(f.p(a));
                    h.addF64(f.r.a1(a));
                    h.addF64(f.r.a2(a));
                }
                h.addF64(f.s);
            }
            h.addU64(static_cast<uint64_t>(p.active_len));
        }
        return h.value();
    }

    void report(const char *name, double serial_s, double parallel_s,
                bool match)
    {
        std::printf("%-22s serial %8.1f ms   parallel %8.1f ms   speedup %.2fx   %s\n",
                    name, serial_s * 1e3, parallel_s * 1e3,
                    serial_s / parallel_s, match ? "outputs match" : "MISMATCH");
    }

} // namespace

int main()
{
    const int threads = maxThreads();
    std::printf("aerobench: %d thread(s) available\n", threads);

    {
        const Scenario sc = makeScenario(ScenarioKind::Forest, 4);
        const double voxel = 0.2;
        double t0 = now();
        const SdfGrid ref = SdfGrid::buildReference(sc.scene, voxel);
        const double serial_s = now() - t0;
        setThreads(threads);
        t0 = now();
        const SdfGrid par = SdfGrid::build(sc.scene, voxel);
        const double parallel_s = now() - t0;
        report("sdf grid fill", serial_s, parallel_s,
               hashGrid(ref) == hashGrid(par));
    }

    {
        DatasetSpec spec;
        spec.resolution = 2.0;
        double t0 = now();
        setThreads(1);
        const Dataset ser = buildDataset(spec);
        const double serial_s = now() - t0;
        setThreads(threads);
        t0 = now();
        const Dataset par = buildDataset(spec);
        const double parallel_s = now() - t0;
        report("dataset build", serial_s, parallel_s,
               hashPrims(ser.prims) == hashPrims(par.prims));
    }

    {
        ModelConfig mc;
        mc.d = 32;
        mc.L = 1;
        mc.H = 2;
        DenoiserModel model(mc, 9);
        const NoiseSchedule sched = NoiseSchedule::makeExponential(mc.T);
        const Eigen::Vector3d pos_std(2.5, 2.5, 0.8);
        Scenario sc;
        sc.scene.bound_min = Eigen::Vector3d(-6, -8, -4);
        sc.scene.bound_max = Eigen::Vector3d(14, 8, 6);
        const SdfGrid grid = SdfGrid::build(sc.scene, 0.5);
        GuidanceConfig gc;
        gc.batch = 32;
        gc.guide_to = mc.T;

        const std::vector<StateFrame> hist =
            bootstrapHistory(Eigen::Vector3d::Zero(), Eigen::Vector3d(2, 0, 0),
                             mc.n_hist);
        Mat hrows = framesToMat(hist);
        DenoiseCond cond;
        cond.history = normalizeRows(hrows, pos_std);
        cond.target = Eigen::Vector3d(5, 1, 0).cwiseQuotient(pos_std);
        cond.action = 0;

        setThreads(1);
        Rng master1(21);
        double t0 = now();
        const BatchResult ser = batchSampleChecked(
            model, cond, Eigen::Vector3d::Zero(), grid, gc, sched, pos_std,
            master1);
        const double serial_s = now() - t0;
        setThreads(threads);
        Rng master2(21);
        t0 = now();
        const BatchResult par = batchSampleChecked(
            model, cond, Eigen::Vector3d::Zero(), grid, gc, sched, pos_std,
            master2);
        const double parallel_s = now() - t0;
        report("batch sampling", serial_s, parallel_s,
               hashPrims({ser.prim}) == hashPrims({par.prim}) &&
                   ser.stats.picked == par.stats.picked);
    }

    return 0;
}
