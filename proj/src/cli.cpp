#include "aero/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "aero/binio.hpp"
#include "aero/dataset.hpp"
#include "aero/diffusion.hpp"
#include "aero/environment.hpp"
#include "aero/guidance.hpp"
#include "aero/plot.hpp"
#include "aero/postprocess.hpp"

namespace aero
{
    namespace
    {

        using nlohmann::json;
        namespace fs = std::filesystem;

        json loadJsonFile(const std::string &path)
        {
            std::ifstream in(path);
            if (!in)
            {
                throw IoError("cannot open: " + path);
            }
            try
            {
                json j;
                in >> j;
                return j;
            }
            catch (const json::exception &e)
            {
                throw ConfigError("invalid JSON in " + path + ": " + e.what());
            }
        }

        void checkKeys(const json &o, const std::string &where,
                       std::initializer_list<const char *> allowed)
        {
            if (!o.is_object())
            {
                throw ConfigError(where + " must be an object");
            }
            for (auto it = o.begin(); it != o.end(); ++it)
            {
                bool known = false;
                for (const char *k : allowed)
                {
                    if (it.key() == k)
                    {
                        known = true;
                        break;
                    }
                }
                if (!known)
                {
                    throw ConfigError("unknown key '" + it.key() + "' in " + where);
                }
            }
        }

        const json *findKey(const json &o, const char *k)
        {
            const auto it = o.find(k);
            return it == o.end() ? nullptr : &*it;
        }

        double getNum(const json &o, const char *k, double def,
                      const std::string &where)
        {
            const json *v = findKey(o, k);
            if (!v)
            {
                return def;
            }
            if (!v->is_number())
            {
                throw ConfigError(where + "." + k + " must be a number");
            }
            return v->get<double>();
        }

        long long getInt(const json &o, const char *k, long long def,
                         const std::string &where)
        {
            const json *v = findKey(o, k);
            if (!v)
            {
                return def;
            }
            if (!v->is_number_integer())
            {
                throw ConfigError(where + "." + k + " must be an integer");
            }
            return v->get<long long>();
        }

        uint64_t getSeed(const json &o, const char *k, uint64_t def,
                         const std::string &where)
        {
            const json *v = findKey(o, k);
            if (!v)
            {
                return def;
            }
            if (!v->is_number_integer() || v->get<long long>() < 0)
            {
                throw ConfigError(where + "." + k +
                                  " must be a nonnegative integer");
            }
            return v->get<uint64_t>();
        }

        bool getBool(const json &o, const char *k, bool def,
                     const std::string &where)
        {
            const json *v = findKey(o, k);
            if (!v)
            {
                return def;
            }
            if (!v->is_boolean())
            {
                throw ConfigError(where + "." + k + " must be a boolean");
            }
            return v->get<bool>();
        }

        std::string getStr(const json &o, const char *k, const std::string &def,
                           const std::string &where)
        {
            const json *v = findKey(o, k);
            if (!v)
            {
                return def;
            }
            if (!v->is_string())
            {
                throw ConfigError(where + "." + k + " must be a string");
            }
            return v->get<std::string>();
        }

        std::string needStr(const json &o, const char *k,
                            const std::string &where)
        {
            const json *v = findKey(o, k);
            if (!v)
            {
                throw ConfigError(where + "." + k + " is required");
            }
            if (!v->is_string())
            {
                throw ConfigError(where + "." + k + " must be a string");
            }
            return v->get<std::string>();
        }

        Eigen::Vector3d asVec3(const json &v, const std::string &what)
        {
            if (!v.is_array() || v.size() != 3)
            {
                throw ConfigError(what + " must be [x, y, z]");
            }
            Eigen::Vector3d out;
            for (int a = 0; a < 3; ++a)
            {
                if (!v[static_cast<size_t>(a)].is_number())
                {
                    throw ConfigError(what + " must hold numbers");
                }
                out(a) = v[static_cast<size_t>(a)].get<double>();
            }
            return out;
        }

        Eigen::Vector3d getVec3(const json &o, const char *k,
                                const Eigen::Vector3d &def,
                                const std::string &where)
        {
            const json *v = findKey(o, k);
            if (!v)
            {
                return def;
            }
            return asVec3(*v, where + "." + std::string(k));
        }

        QuadParams parseQuad(const json &o, const std::string &where)
        {
            QuadParams qp;
            const json *v = findKey(o, "quad");
            if (!v)
            {
                return qp;
            }
            const std::string w = where + ".quad";
            checkKeys(*v, w,
                      {"mass", "g", "v_max", "f_min", "f_max", "omega_max_xy",
                       "omega_max_z"});
            qp.mass = getNum(*v, "mass", qp.mass, w);
            qp.g = getNum(*v, "g", qp.g, w);
            qp.v_max = getNum(*v, "v_max", qp.v_max, w);
            qp.f_min = getNum(*v, "f_min", qp.f_min, w);
            qp.f_max = getNum(*v, "f_max", qp.f_max, w);
            qp.omega_max_xy = getNum(*v, "omega_max_xy", qp.omega_max_xy, w);
            qp.omega_max_z = getNum(*v, "omega_max_z", qp.omega_max_z, w);
            return qp;
        }

        GuidanceConfig parseGuidance(const json &o, const std::string &where,
                                     int T)
        {
            GuidanceConfig gc;
            gc.guide_to = T;
            const json *v = findKey(o, "guidance");
            if (!v)
            {
                return gc;
            }
            const std::string w = where + ".guidance";
            checkKeys(*v, w,
                      {"d", "lambda", "guide_from", "guide_to", "batch", "guide",
                       "coarse_check"});
            gc.d = getNum(*v, "d", gc.d, w);
            gc.lambda = getNum(*v, "lambda", gc.lambda, w);
            gc.guide_from = static_cast<int>(getInt(*v, "guide_from", gc.guide_from, w));
            gc.guide_to = static_cast<int>(getInt(*v, "guide_to", gc.guide_to, w));
            gc.batch = static_cast<int>(getInt(*v, "batch", gc.batch, w));
            gc.guide = getBool(*v, "guide", gc.guide, w);
            gc.coarse_check = getBool(*v, "coarse_check", gc.coarse_check, w);
            return gc;
        }

        void parseSchedule(const json &o, const std::string &where,
                           double &lambda, double &kappa)
        {
            lambda = 8.0;
            kappa = 1.0;
            const json *v = findKey(o, "schedule");
            if (!v)
            {
                return;
            }
            const std::string w = where + ".schedule";
            checkKeys(*v, w, {"lambda", "kappa"});
            lambda = getNum(*v, "lambda", lambda, w);
            kappa = getNum(*v, "kappa", kappa, w);
        }

        ScenarioParams parseScenarioParams(const json &o, const std::string &w,
                                           int default_targets)
        {
            ScenarioParams sp;
            sp.density = getNum(o, "density", sp.density, w);
            sp.n_targets = static_cast<int>(getInt(o, "n_targets", default_targets, w));
            sp.d_margin = getNum(o, "d_margin", sp.d_margin, w);
            sp.spacing_min = getNum(o, "spacing_min", sp.spacing_min, w);
            sp.spacing_max = getNum(o, "spacing_max", sp.spacing_max, w);
            sp.retries = static_cast<int>(getInt(o, "retries", sp.retries, w));
            return sp;
        }

        void writeManifest(const std::string &out_dir, const std::string &command,
                           const json &cfg,
                           const std::vector<std::string> &input_paths,
                           const std::vector<std::string> &output_names)
        {
            json m;
            m["version"] = 1;
            m["command"] = command;
            m["config"] = cfg;
            json in = json::object();
            for (const std::string &p : input_paths)
            {
                in[p] = hashFileHex(p);
            }
            m["inputs"] = in;
            json outj = json::object();
            for (const std::string &name : output_names)
            {
                outj[name] = hashFileHex((fs::path(out_dir) / name).string());
            }
            m["outputs"] = outj;
            std::ofstream os(fs::path(out_dir) / "manifest.json", std::ios::binary);
            if (!os)
            {
                throw IoError("cannot write manifest in " + out_dir);
            }
            os << m.dump(2) << "\n";
        }

        void writeJsonFile(const std::string &path, const json &j)
        {
            std::ofstream os(path, std::ios::binary);
            if (!os)
            {
                throw IoError("cannot open for writing: " + path);
            }
            os << j.dump(2) << "\n";
        }

        struct SceneBundle
        {
            Scenario sc;
            SdfGrid grid;
            std::string scene_path;
            std::string cache_path;
            bool cache_existed = false;
        };

        SceneBundle loadSceneBundle(const json &o, const std::string &where,
                                    const std::string &out_dir)
        {
            SceneBundle sb;
            sb.scene_path = needStr(o, "scene", where);
            sb.sc = loadScenario(sb.scene_path);
            const double voxel = getNum(o, "voxel", 0.25, where);
            const double far_clamp = getNum(o, "far_clamp", 5.0, where);
            const std::string sibling =
                (fs::path(sb.scene_path).parent_path() / "sdf.bin").string();
            std::string cache = getStr(o, "sdf_cache", sibling, where);
            if (fs::exists(cache))
            {
                sb.cache_existed = true;
            }
            else
            {
                cache = (fs::path(out_dir) / "sdf.bin").string();
            }
            sb.cache_path = cache;
            sb.grid = loadOrBuildSdf(sb.sc, voxel, cache, far_clamp);
            return sb;
        }

        Dataset chainToDataset(const std::vector<Primitive> &prims,
                               const Denoiser &den)
        {
            Dataset ds;
            ds.n_frames = den.frameCount();
            ds.n_history = den.historyLen();
            ds.dt = kFrameDt;
            ds.prims = prims;
            return ds;
        }

        // ---- subcommands ----------------------------------------------------

        void cmdDataset(const json &cfg, const std::string &out)
        {
            const std::string w = "dataset";
            checkKeys(cfg, w,
                      {"bounds_min", "bounds_max", "resolution", "actions",
                       "augment_angles", "seed", "retries", "quad"});
            DatasetSpec spec;
            spec.bound_min = getVec3(cfg, "bounds_min", spec.bound_min, w);
            spec.bound_max = getVec3(cfg, "bounds_max", spec.bound_max, w);
            spec.resolution = getNum(cfg, "resolution", spec.resolution, w);
            if (const json *v = findKey(cfg, "actions"))
            {
                if (!v->is_array() || v->empty())
                {
                    throw ConfigError("dataset.actions must be a non-empty array");
                }
                spec.actions.clear();
                for (const json &a : *v)
                {
                    if (!a.is_string())
                    {
                        throw ConfigError("dataset.actions must hold names");
                    }
                    spec.actions.push_back(actionFromName(a.get<std::string>()));
                }
            }
            if (const json *v = findKey(cfg, "augment_angles"))
            {
                if (!v->is_array())
                {
                    throw ConfigError("dataset.augment_angles must be an array");
                }
                spec.augment_angles.clear();
                for (const json &a : *v)
                {
                    if (!a.is_number())
                    {
                        throw ConfigError(
                            "dataset.augment_angles must hold numbers");
                    }
                    spec.augment_angles.push_back(a.get<double>());
                }
            }
            spec.seed = getSeed(cfg, "seed", spec.seed, w);
            spec.retries = static_cast<int>(getInt(cfg, "retries", spec.retries, w));
            const QuadParams qp = parseQuad(cfg, w);

            Dataset ds = buildDataset(spec, qp);
            const size_t base = ds.prims.size();
            if (!spec.augment_angles.empty())
            {
                augmentZRotations(ds, spec.augment_angles);
            }
            saveDataset(ds, (fs::path(out) / "dataset.bin").string());
            std::printf("dataset: %zu primitives (%zu base, %zu augmented)\n",
                        ds.prims.size(), base, ds.prims.size() - base);
            writeManifest(out, "dataset", cfg, {}, {"dataset.bin"});
        }

        void cmdTrain(const json &cfg, const std::string &out)
        {
            const std::string w = "train";
            checkKeys(cfg, w,
                      {"dataset", "steps", "batch", "lr", "w_vel", "cond_drop",
                       "use_history", "seed", "log_every", "model", "schedule"});
            const std::string ds_path = needStr(cfg, "dataset", w);
            const Dataset ds = loadDataset(ds_path);

            TrainConfig tc;
            tc.model.n_frames = ds.n_frames;
            tc.model.n_hist = ds.n_history;
            if (const json *v = findKey(cfg, "model"))
            {
                const std::string mw = w + ".model";
                checkKeys(*v, mw, {"d", "layers", "heads", "t"});
                tc.model.d = static_cast<int>(getInt(*v, "d", tc.model.d, mw));
                tc.model.L = static_cast<int>(getInt(*v, "layers", tc.model.L, mw));
                tc.model.H = static_cast<int>(getInt(*v, "heads", tc.model.H, mw));
                tc.model.T = static_cast<int>(getInt(*v, "t", tc.model.T, mw));
            }
            double lambda, kappa;
            parseSchedule(cfg, w, lambda, kappa);
            tc.steps = static_cast<int>(getInt(cfg, "steps", tc.steps, w));
            tc.batch = static_cast<int>(getInt(cfg, "batch", tc.batch, w));
            tc.lr = getNum(cfg, "lr", tc.lr, w);
            tc.w_vel = getNum(cfg, "w_vel", tc.w_vel, w);
            tc.cond_drop = getNum(cfg, "cond_drop", tc.cond_drop, w);
            tc.seed = getSeed(cfg, "seed", tc.seed, w);
            tc.log_every = static_cast<int>(getInt(cfg, "log_every", tc.log_every, w));
            tc.use_history = getBool(cfg, "use_history", tc.use_history, w);

            const NoiseSchedule sched =
                NoiseSchedule::makeExponential(tc.model.T, lambda, kappa);
            DenoiserModel model(tc.model, tc.seed);
            const TrainResult res = train(model, ds, sched, tc);
            saveCheckpoint((fs::path(out) / "checkpoint.bin").string(), model,
                           res.pos_std, tc.use_history);
            saveLossCurve((fs::path(out) / "loss.csv").string(), res.curve);
            std::printf("train: %ld params, %d steps, loss %.4f -> %.4f\n",
                        res.param_count, tc.steps, res.initial_total,
                        res.curve.back()[3]);
            writeManifest(out, "train", cfg, {ds_path},
                          {"checkpoint.bin", "loss.csv"});
        }

        void cmdScene(const json &cfg, const std::string &out)
        {
            const std::string w = "scene";
            checkKeys(cfg, w,
                      {"kind", "name", "seed", "voxel", "far_clamp", "density",
                       "n_targets", "d_margin", "spacing_min", "spacing_max",
                       "retries", "bounds_min", "bounds_max", "targets"});
            const std::string kind = needStr(cfg, "kind", w);
            const uint64_t seed = getSeed(cfg, "seed", 0, w);
            const double voxel = getNum(cfg, "voxel", 0.25, w);
            const double far_clamp = getNum(cfg, "far_clamp", 5.0, w);

            Scenario sc;
            if (kind == "empty")
            {
                sc.scene.name = getStr(cfg, "name", "empty", w);
                sc.scene.obstacles.clear();
                sc.scene.bound_min =
                    getVec3(cfg, "bounds_min", Eigen::Vector3d(-10, -10, -5), w);
                sc.scene.bound_max =
                    getVec3(cfg, "bounds_max", Eigen::Vector3d(10, 10, 5), w);
                if (const json *v = findKey(cfg, "targets"))
                {
                    if (!v->is_array())
                    {
                        throw ConfigError("scene.targets must be an array");
                    }
                    for (const json &t : *v)
                    {
                        sc.targets.push_back(asVec3(t, "scene.targets entry"));
                    }
                }
            }
            else
            {
                const ScenarioParams sp =
                    parseScenarioParams(cfg, w, ScenarioParams().n_targets);
                sc = makeScenario(scenarioKindFromName(kind), seed, sp);
            }
            saveScenario(sc, (fs::path(out) / "scene.json").string());
            const SdfGrid grid = loadOrBuildSdf(
                sc, voxel, (fs::path(out) / "sdf.bin").string(), far_clamp);
            std::printf("scene: %s, %zu obstacles, %zu targets, grid %dx%dx%d\n",
                        sc.scene.name.c_str(), sc.scene.obstacles.size(),
                        sc.targets.size(), grid.nx(), grid.ny(), grid.nz());
            writeManifest(out, "scene", cfg, {}, {"scene.json", "sdf.bin"});
        }

        void cmdGenerate(const json &cfg, const std::string &out)
        {
            const std::string w = "generate";
            checkKeys(cfg, w,
                      {"checkpoint", "scene", "sdf_cache", "voxel", "far_clamp",
                       "n_aero", "seed", "start_pos", "start_vel", "actions",
                       "targets", "guidance", "schedule", "audit_samples"});
            const std::string ckpt_path = needStr(cfg, "checkpoint", w);
            const LoadedModel lm = loadCheckpoint(ckpt_path);
            const SceneBundle sb = loadSceneBundle(cfg, w, out);

            double lambda, kappa;
            parseSchedule(cfg, w, lambda, kappa);
            const NoiseSchedule sched = NoiseSchedule::makeExponential(
                lm.model->timeSteps(), lambda, kappa);
            const GuidanceConfig gc =
                parseGuidance(cfg, w, lm.model->timeSteps());

            ChainPlan plan;
            plan.seed = getSeed(cfg, "seed", 0, w);
            plan.start_pos = getVec3(cfg, "start_pos", Eigen::Vector3d::Zero(), w);
            plan.start_vel =
                getVec3(cfg, "start_vel", Eigen::Vector3d(2, 0, 0), w);
            plan.use_history = lm.use_history;
            const int n_aero = static_cast<int>(getInt(cfg, "n_aero", 1, w));
            if (n_aero < 1)
            {
                throw ConfigError("generate.n_aero must be positive");
            }
            if (const json *v = findKey(cfg, "targets"))
            {
                if (!v->is_array() || v->empty())
                {
                    throw ConfigError("generate.targets must be a non-empty array");
                }
                for (const json &t : *v)
                {
                    plan.targets.push_back(asVec3(t, "generate.targets entry"));
                }
                if (static_cast<int>(plan.targets.size()) != n_aero)
                {
                    throw ConfigError("generate.targets must list n_aero entries");
                }
            }
            else
            {
                if (static_cast<int>(sb.sc.targets.size()) < n_aero)
                {
                    throw ValidationError(
                        "scenario offers fewer targets than n_aero");
                }
                plan.targets.assign(sb.sc.targets.begin(),
                                    sb.sc.targets.begin() + n_aero);
            }
            if (const json *v = findKey(cfg, "actions"))
            {
                if (!v->is_array() || v->empty())
                {
                    throw ConfigError("generate.actions must be a non-empty array");
                }
                for (const json &a : *v)
                {
                    if (!a.is_string())
                    {
                        throw ConfigError("generate.actions must hold names");
                    }
                    plan.actions.push_back(
                        static_cast<int>(actionFromName(a.get<std::string>())));
                }
                if (plan.actions.size() == 1 && n_aero > 1)
                {
                    plan.actions.assign(static_cast<size_t>(n_aero),
                                        plan.actions.front());
                }
                if (static_cast<int>(plan.actions.size()) != n_aero)
                {
                    throw ConfigError(
                        "generate.actions must list one or n_aero entries");
                }
            }
            else
            {
                for (int k = 0; k < n_aero; ++k)
                {
                    plan.actions.push_back(k % 5);
                }
            }

            const ChainResult cr =
                chainGenerate(*lm.model, plan, sb.grid, gc, sched, lm.pos_std);
            const int audit_pts =
                static_cast<int>(getInt(cfg, "audit_samples", 10, w));
            const AuditResult audit = auditChain(cr.prims, sb.grid, audit_pts);
            const std::vector<JunctionDelta> junctions = chainJunctions(cr.prims);

            saveDataset(chainToDataset(cr.prims, *lm.model),
                        (fs::path(out) / "chain.bin").string());
            json cj;
            cj["n_aero"] = n_aero;
            cj["seed"] = plan.seed;
            cj["use_history"] = plan.use_history;
            json tg = json::array();
            json an = json::array();
            for (int k = 0; k < n_aero; ++k)
            {
                tg.push_back({plan.targets[static_cast<size_t>(k)].x(),
                              plan.targets[static_cast<size_t>(k)].y(),
                              plan.targets[static_cast<size_t>(k)].z()});
                an.push_back(actionName(
                    static_cast<ActionLabel>(plan.actions[static_cast<size_t>(k)])));
            }
            cj["targets"] = tg;
            cj["actions"] = an;
            json stats = json::array();
            for (const BatchStats &st : cr.stats)
            {
                stats.push_back({{"batch", st.batch},
                                 {"collision_free", st.collision_free},
                                 {"free_fraction", st.free_fraction},
                                 {"picked", st.picked},
                                 {"s_warning", st.s_warning}});
            }
            cj["batches"] = stats;
            json js = json::array();
            for (const JunctionDelta &jd : junctions)
            {
                js.push_back({{"dp", jd.dp}, {"dtheta", jd.dtheta}});
            }
            cj["junctions"] = js;
            cj["audit"] = {{"ok", audit.ok},
                           {"min_sdf", audit.min_sdf},
                           {"worst_prim", audit.worst_prim},
                           {"worst_frame", audit.worst_frame}};
            writeJsonFile((fs::path(out) / "chain.json").string(), cj);
            std::printf("generate: %d primitives, audit min sdf %.3f (%s)\n",
                        n_aero, audit.min_sdf, audit.ok ? "ok" : "collision");
            std::vector<std::string> inputs{ckpt_path, sb.scene_path};
            if (sb.cache_existed)
            {
                inputs.push_back(sb.cache_path);
            }
            writeManifest(out, "generate", cfg, inputs,
                          {"chain.bin", "chain.json"});
        }

        void cmdPostprocess(const json &cfg, const std::string &out)
        {
            const std::string w = "postprocess";
            checkKeys(cfg, w,
                      {"chain", "scene", "sdf_cache", "voxel", "far_clamp",
                       "alpha_deg", "corridor", "quad", "weights", "s_o",
                       "quad_samples", "stage_iters", "two_stage", "csv_dt"});
            const std::string chain_path = needStr(cfg, "chain", w);
            const Dataset chain = loadDataset(chain_path);
            const SceneBundle sb = loadSceneBundle(cfg, w, out);

            OptProblem prob;
            prob.quad = parseQuad(cfg, w);
            if (const json *v = findKey(cfg, "weights"))
            {
                const std::string ww = w + ".weights";
                checkKeys(*v, ww,
                          {"rho_t", "w_att", "w_v", "w_f", "w_omega_xy",
                           "w_omega_z", "w_safe", "limit_shrink"});
                OptWeights &ow = prob.weights;
                ow.rho_T = getNum(*v, "rho_t", ow.rho_T, ww);
                ow.w_att = getNum(*v, "w_att", ow.w_att, ww);
                ow.w_v = getNum(*v, "w_v", ow.w_v, ww);
                ow.w_f = getNum(*v, "w_f", ow.w_f, ww);
                ow.w_omega_xy = getNum(*v, "w_omega_xy", ow.w_omega_xy, ww);
                ow.w_omega_z = getNum(*v, "w_omega_z", ow.w_omega_z, ww);
                ow.w_safe = getNum(*v, "w_safe", ow.w_safe, ww);
                ow.limit_shrink = getNum(*v, "limit_shrink", ow.limit_shrink, ww);
            }
            prob.s_o = static_cast<int>(getInt(cfg, "s_o", prob.s_o, w));
            prob.quad_samples =
                static_cast<int>(getInt(cfg, "quad_samples", prob.quad_samples, w));
            prob.stage_iters =
                static_cast<int>(getInt(cfg, "stage_iters", prob.stage_iters, w));
            CorridorParams cp;
            if (const json *v = findKey(cfg, "corridor"))
            {
                const std::string cw = w + ".corridor";
                checkKeys(*v, cw, {"r_quad", "margin", "step", "max_extent"});
                cp.r_quad = getNum(*v, "r_quad", cp.r_quad, cw);
                cp.margin = getNum(*v, "margin", cp.margin, cw);
                cp.step = getNum(*v, "step", cp.step, cw);
                cp.max_extent = getNum(*v, "max_extent", cp.max_extent, cw);
            }
            const double alpha =
                getNum(cfg, "alpha_deg", 30.0, w) * M_PI / 180.0;
            const bool two_stage = getBool(cfg, "two_stage", true, w);
            const double csv_dt = getNum(cfg, "csv_dt", 0.01, w);

            const std::vector<StateFrame> frames = flattenChain(chain.prims);
            prob.kf = extractKeyframes(frames, alpha);
            prob.corridor = buildCorridor(frames, prob.kf, sb.grid, cp);
            boundaryFromFrames(frames, prob.x0, prob.xf);

            const OptimizeOutcome res = hierarchicalOptimize(prob, two_stage);
            writeTrajectoryCsv((fs::path(out) / "trajectory.csv").string(),
                               res.spline, prob.quad, csv_dt);
            writeOptimizeReportJson((fs::path(out) / "report.json").string(), res);
            writeCorridorJson((fs::path(out) / "corridor.json").string(),
                              prob.corridor);
            std::printf(
                "postprocess: %d+%d iters, cost %.4g, max violation %.3g\n",
                res.stage1.iters, res.stage2.iters, res.terms.total(),
                res.feas.maxViolation());
            std::vector<std::string> inputs{chain_path, sb.scene_path};
            if (sb.cache_existed)
            {
                inputs.push_back(sb.cache_path);
            }
            writeManifest(out, "postprocess", cfg, inputs,
                          {"trajectory.csv", "report.json", "corridor.json"});
        }

        struct AblateCell
        {
            std::string variant;
            int n_aero = 1;
            std::vector<double> rates;
            std::vector<std::string> diagnostics;
            double free_fraction_sum = 0.0;
            int free_fraction_count = 0;
        };

        void cmdAblate(const json &cfg, const std::string &out)
        {
            const std::string w = "ablate";
            checkKeys(cfg, w,
                      {"checkpoint", "scenario", "seeds", "n_aero", "chains",
                       "variants", "guidance", "schedule"});
            const std::string ckpt_path = needStr(cfg, "checkpoint", w);
            const LoadedModel lm = loadCheckpoint(ckpt_path);
            double lambda, kappa;
            parseSchedule(cfg, w, lambda, kappa);
            const NoiseSchedule sched = NoiseSchedule::makeExponential(
                lm.model->timeSteps(), lambda, kappa);
            const GuidanceConfig base_gc =
                parseGuidance(cfg, w, lm.model->timeSteps());

            const json *sv = findKey(cfg, "scenario");
            if (!sv)
            {
                throw ConfigError("ablate.scenario is required");
            }
            const std::string sw = w + ".scenario";
            checkKeys(*sv, sw,
                      {"kind", "voxel", "far_clamp", "density", "n_targets",
                       "d_margin", "spacing_min", "spacing_max", "retries"});
            const ScenarioKind kind = scenarioKindFromName(needStr(*sv, "kind", sw));
            const double voxel = getNum(*sv, "voxel", 0.25, sw);
            const double far_clamp = getNum(*sv, "far_clamp", 5.0, sw);

            std::vector<uint64_t> seeds;
            if (const json *v = findKey(cfg, "seeds"))
            {
                if (!v->is_array())
                {
                    throw ConfigError("ablate.seeds must be an array");
                }
                for (const json &s : *v)
                {
                    if (!s.is_number_integer() || s.get<long long>() < 0)
                    {
                        throw ConfigError(
                            "ablate.seeds must hold nonnegative integers");
                    }
                    seeds.push_back(s.get<uint64_t>());
                }
            }
            else
            {
                seeds = {0, 1};
            }
            if (seeds.size() < 2)
            {
                throw ConfigError("ablate needs at least two seeds");
            }
            std::vector<int> n_list;
            if (const json *v = findKey(cfg, "n_aero"))
            {
                if (!v->is_array() || v->empty())
                {
                    throw ConfigError("ablate.n_aero must be a non-empty array");
                }
                for (const json &n : *v)
                {
                    if (!n.is_number_integer() || n.get<long long>() < 1)
                    {
                        throw ConfigError(
                            "ablate.n_aero must hold positive integers");
                    }
                    n_list.push_back(n.get<int>());
                }
            }
            else
            {
                n_list = {1, 2, 3};
            }
            const int chains = static_cast<int>(getInt(cfg, "chains", 8, w));
            if (chains < 1)
            {
                throw ConfigError("ablate.chains must be positive");
            }
            const int max_n = *std::max_element(n_list.begin(), n_list.end());
            const ScenarioParams sp =
                parseScenarioParams(*sv, sw, std::max(6, max_n + 1));
            if (sp.n_targets <= max_n)
            {
                throw ConfigError(
                    "ablate scenario needs more targets than the longest chain");
            }

            std::vector<std::string> variants = {"ours", "uncheck", "unguided"};
            if (const json *v = findKey(cfg, "variants"))
            {
                if (!v->is_array() || v->empty())
                {
                    throw ConfigError("ablate.variants must be a non-empty array");
                }
                variants.clear();
                for (const json &s : *v)
                {
                    const std::string name =
                        s.is_string() ? s.get<std::string>() : "";
                    if (name != "ours" && name != "uncheck" && name != "unguided")
                    {
                        throw ConfigError(
                            "ablate.variants entries must be ours, uncheck, or "
                            "unguided");
                    }
                    variants.push_back(name);
                }
            }

            std::vector<Scenario> scs;
            std::vector<SdfGrid> grids;
            for (uint64_t s : seeds)
            {
                scs.push_back(makeScenario(kind, s, sp));
                grids.push_back(SdfGrid::build(scs.back().scene, voxel, far_clamp));
            }

            std::vector<AblateCell> cells;
            for (const std::string &variant : variants)
            {
                // cumulative pipeline stages: ours = guidance + coarse check,
                // uncheck drops the check, unguided drops both
                GuidanceConfig gc = base_gc;
                gc.guide = variant == "ours" || variant == "uncheck";
                gc.coarse_check = variant == "ours";
                for (int n : n_list)
                {
                    AblateCell cell;
                    cell.variant = variant;
                    cell.n_aero = n;
                    for (size_t si = 0; si < seeds.size(); ++si)
                    {
                        const Scenario &sc = scs[si];
                        const int n_t = static_cast<int>(sc.targets.size());
                        int ok_count = 0;
                        for (int c = 0; c < chains; ++c)
                        {
                            ChainPlan plan;
                            plan.seed = seeds[si] * 0x9E3779B97F4A7C15ull +
                                        static_cast<uint64_t>(c) * 0x100000001B3ull;
                            plan.use_history = lm.use_history;
                            // consecutive target windows keep every hop inside
                            // the walk's spacing guarantees
                            const int s0 = c % (n_t - n);
                            plan.start_pos = sc.targets[static_cast<size_t>(s0)];
                            for (int j = 1; j <= n; ++j)
                            {
                                plan.targets.push_back(
                                    sc.targets[static_cast<size_t>(s0 + j)]);
                                plan.actions.push_back((c + j - 1) % 5);
                            }
                            try
                            {
                                const ChainResult cr = chainGenerate(
                                    *lm.model, plan, grids[si], gc, sched,
                                    lm.pos_std);
                                for (const BatchStats &st : cr.stats)
                                {
                                    cell.free_fraction_sum += st.free_fraction;
                                    cell.free_fraction_count += 1;
                                }
                                if (auditChain(cr.prims, grids[si], 10).ok)
                                {
                                    ok_count += 1;
                                }
                                else
                                {
                                    cell.diagnostics.push_back(
                                        "seed " + std::to_string(seeds[si]) +
                                        " chain " + std::to_string(c) +
                                        ": audit found a collision");
                                }
                            }
                            catch (const Error &e)
                            {
                                cell.diagnostics.push_back(
                                    "seed " + std::to_string(seeds[si]) +
                                    " chain " + std::to_string(c) + ": " +
                                    e.what());
                            }
                        }
                        cell.rates.push_back(100.0 * ok_count / chains);
                    }
                    cells.push_back(std::move(cell));
                }
            }

            std::string csv = "variant,n_aero,median,half_range\n";
            json report;
            report["seeds"] = seeds;
            report["chains"] = chains;
            json jcells = json::array();
            std::printf("%-10s", "variant");
            for (int n : n_list)
            {
                std::printf("  %-14s", ("N=" + std::to_string(n)).c_str());
            }
            std::printf("\n");
            for (const std::string &variant : variants)
            {
                std::printf("%-10s", variant.c_str());
                for (const AblateCell &cell : cells)
                {
                    if (cell.variant != variant)
                    {
                        continue;
                    }
                    const double med = quantileLinear(cell.rates, 0.5);
                    const double lo =
                        *std::min_element(cell.rates.begin(), cell.rates.end());
                    const double hi =
                        *std::max_element(cell.rates.begin(), cell.rates.end());
                    const double half = 0.5 * (hi - lo);
                    std::printf("  %5.1f +- %-5.1f", med, half);
                    char row[96];
                    std::snprintf(row, sizeof(row), "%s,%d,%.2f,%.2f\n",
                                  cell.variant.c_str(), cell.n_aero, med, half);
                    csv += row;
                    json jc;
                    jc["variant"] = cell.variant;
                    jc["n_aero"] = cell.n_aero;
                    jc["rates"] = cell.rates;
                    jc["median"] = med;
                    jc["half_range"] = half;
                    jc["mean_free_fraction"] =
                        cell.free_fraction_count
                            ? cell.free_fraction_sum / cell.free_fraction_count
                            : 0.0;
                    jc["diagnostics"] = cell.diagnostics;
                    jcells.push_back(jc);
                }
                std::printf("\n");
            }
            report["cells"] = jcells;
            std::ofstream cs(fs::path(out) / "table.csv", std::ios::binary);
            if (!cs)
            {
                throw IoError("cannot write ablation table");
            }
            cs << csv;
            cs.close();
            writeJsonFile((fs::path(out) / "report.json").string(), report);
            writeManifest(out, "ablate", cfg, {ckpt_path},
                          {"table.csv", "report.json"});
        }

        void cmdPlot(const json &cfg, const std::string &out)
        {
            const std::string w = "plot";
            checkKeys(cfg, w, {"kind", "input", "scene", "output"});
            const std::string kind = needStr(cfg, "kind", w);
            const std::string input = needStr(cfg, "input", w);
            std::vector<std::string> inputs{input};
            std::string name;
            if (kind == "profile")
            {
                name = getStr(cfg, "output", "profile.svg", w);
                svgProfile((fs::path(out) / name).string(),
                           readTrajectoryCsv(input));
            }
            else if (kind == "topdown")
            {
                name = getStr(cfg, "output", "topdown.svg", w);
                const std::string scene_path = needStr(cfg, "scene", w);
                inputs.push_back(scene_path);
                const Scenario sc = loadScenario(scene_path);
                const Dataset chain = loadDataset(input);
                std::vector<std::vector<Eigen::Vector3d>> paths;
                std::vector<Eigen::Vector3d> targets;
                for (const Primitive &p : chain.prims)
                {
                    std::vector<Eigen::Vector3d> path;
                    for (int i = 0; i < p.active_len; ++i)
                    {
                        path.push_back(p.frames[static_cast<size_t>(i)].p);
                    }
                    paths.push_back(std::move(path));
                    targets.push_back(p.target);
                }
                svgTopDown((fs::path(out) / name).string(), sc.scene, paths,
                           targets);
            }
            else if (kind == "box")
            {
                name = getStr(cfg, "output", "box.svg", w);
                const json bj = loadJsonFile(input);
                checkKeys(bj, "box data", {"ylabel", "groups"});
                const json *gv = findKey(bj, "groups");
                if (!gv || !gv->is_array() || gv->empty())
                {
                    throw ConfigError("box data needs a non-empty groups array");
                }
                std::vector<std::string> labels;
                std::vector<std::vector<double>> groups;
                for (const json &g : *gv)
                {
                    checkKeys(g, "box group", {"label", "values"});
                    labels.push_back(needStr(g, "label", "box group"));
                    const json *vv = findKey(g, "values");
                    if (!vv || !vv->is_array() || vv->empty())
                    {
                        throw ConfigError(
                            "box group needs a non-empty values array");
                    }
                    std::vector<double> vals;
                    for (const json &x : *vv)
                    {
                        if (!x.is_number())
                        {
                            throw ConfigError("box values must be numbers");
                        }
                        vals.push_back(x.get<double>());
                    }
                    groups.push_back(std::move(vals));
                }
                svgBoxPlot((fs::path(out) / name).string(), labels, groups,
                           getStr(bj, "ylabel", "", "box data"));
            }
            else
            {
                throw ConfigError("plot.kind must be profile, topdown, or box");
            }
            std::printf("plot: wrote %s\n", name.c_str());
            writeManifest(out, "plot", cfg, inputs, {name});
        }

        int reportFailure(const CliOptions &opt, const std::exception &e)
        {
            const char *kind = "internal";
            int code = 1;
            if (dynamic_cast<const ConfigError *>(&e))
            {
                kind = "config";
                code = 2;
            }
            else if (dynamic_cast<const ValidationError *>(&e))
            {
                kind = "validation";
                code = 2;
            }
            else if (dynamic_cast<const IoError *>(&e))
            {
                kind = "io";
                code = 3;
            }
            else if (dynamic_cast<const BatchExhaustedError *>(&e))
            {
                kind = "batch_exhausted";
                code = 4;
            }
            else if (dynamic_cast<const CorridorError *>(&e))
            {
                kind = "corridor";
                code = 4;
            }
            else if (dynamic_cast<const FlatnessSingularityError *>(&e))
            {
                kind = "flatness_singularity";
                code = 4;
            }
            else if (dynamic_cast<const TrainDivergedError *>(&e))
            {
                kind = "train_diverged";
                code = 4;
            }
            else if (dynamic_cast<const GenerationError *>(&e))
            {
                kind = "generation";
                code = 4;
            }
            else if (dynamic_cast<const DegenerateRotationError *>(&e))
            {
                kind = "degenerate_rotation";
                code = 4;
            }
            else if (dynamic_cast<const Error *>(&e))
            {
                kind = "error";
            }
            std::fprintf(stderr, "aerobatch %s: [%s] %s\n", opt.command.c_str(),
                         kind, e.what());
            try
            {
                if (!opt.out_dir.empty())
                {
                    fs::create_directories(opt.out_dir);
                    json ej;
                    ej["error"] = {{"command", opt.command},
                                   {"kind", kind},
                                   {"message", e.what()}};
                    writeJsonFile((fs::path(opt.out_dir) / "error.json").string(),
                                  ej);
                }
            }
            catch (...)
            {
            }
            return code;
        }

    } // namespace

    int runCommand(const CliOptions &opt)
    {
        try
        {
            if (opt.out_dir.empty())
            {
                throw ConfigError("output directory must not be empty");
            }
            fs::create_directories(opt.out_dir);
#ifdef _OPENMP
            if (const char *tenv = std::getenv("AEROBATCH_THREADS"))
            {
                const int n = std::atoi(tenv);
                if (n > 0)
                {
                    omp_set_num_threads(std::min(n, omp_get_max_threads()));
                }
            }
#endif
            const json doc = loadJsonFile(opt.config_path);
            checkKeys(doc, "config",
                      {"version", "dataset", "train", "scene", "generate",
                       "postprocess", "ablate", "plot"});
            if (getInt(doc, "version", 1, "config") != 1)
            {
                throw ConfigError("unsupported config version");
            }
            const json *cmd_cfg = findKey(doc, opt.command.c_str());
            if (!cmd_cfg)
            {
                throw ConfigError("config has no '" + opt.command + "' section");
            }
            json cfg = *cmd_cfg;
            if (opt.seed >= 0)
            {
                if (opt.command == "ablate" || opt.command == "plot")
                {
                    throw ConfigError("--seed does not apply to " + opt.command);
                }
                cfg["seed"] = static_cast<uint64_t>(opt.seed);
            }
            if (opt.command == "dataset")
            {
                cmdDataset(cfg, opt.out_dir);
            }
            else if (opt.command == "train")
            {
                cmdTrain(cfg, opt.out_dir);
            }
            else if (opt.command == "scene")
            {
                cmdScene(cfg, opt.out_dir);
            }
            else if (opt.command == "generate")
            {
                cmdGenerate(cfg, opt.out_dir);
            }
            else if (opt.command == "postprocess")
            {
                cmdPostprocess(cfg, opt.out_dir);
            }
            else if (opt.command == "ablate")
            {
                cmdAblate(cfg, opt.out_dir);
            }
            else if (opt.command == "plot")
            {
                cmdPlot(cfg, opt.out_dir);
            }
            else
            {
                throw ConfigError("unknown command: " + opt.command);
            }
            return 0;
        }
        catch (const std::exception &e)
        {
            return reportFailure(opt, e);
        }
    }

} // namespace aero
