// SPDX-License-Identifier: Apache-2.0
// pausebench command-line driver.

#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include <pausebench/pausebench.hpp>
#include <pausebench/service.hpp>

namespace pb = pausebench;
namespace fs = std::filesystem;

namespace {

void emit(const pb::json &j, const std::string &out) {
  if (out.empty() || out == "-")
    std::cout << j.dump(2) << "\n";
  else
    pb::write_json_file(out, j, 2);
}

std::vector<std::string> split_csv(const std::string &s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty())
      out.push_back(item);
  return out;
}

/// Options shared by run, train and exertion.
struct PipelineOptions {
  std::string config_file, manifest, task = "c", feature = "mfb", acoustic = "mfb",
                           emb = "emb4", loss = "huber";
  int setup = 1, hidden = 32, layers = 2, epochs = 30, batch = 64, patience = 5,
      threads = 1, detector_hidden = 128, detector_epochs = 30, conv_kernel = 0,
      conv_channels = 0;
  double lr = 1e-4, detector_lr = 1e-4, cutoff = 0.05;
  std::uint64_t seed = 0, split_seed = 0;
  bool stub_ones = false, sweep = false, unidirectional = false;
  std::string thresholds;

  void attach(CLI::App *app) {
    app->add_option("--config", config_file, "Pipeline config JSON (flags override)");
    app->add_option("--manifest", manifest, "Dataset manifest JSON");
    app->add_option("--setup", setup, "1 single feature, 2 fusion, 3 two-stage")
        ->check(CLI::Range(1, 3));
    app->add_option("--task", task, "c (classification) or r (regression)")
        ->check(CLI::IsMember({"c", "r"}));
    app->add_option("--feature", feature, "Setup 1 feature: mfb|mfcc|emb4|emb6|emb12");
    app->add_option("--acoustic", acoustic, "Acoustic half of the fusion: mfb|mfcc");
    app->add_option("--emb", emb, "Embedding for setups 2/3: emb4|emb6|emb12");
    app->add_option("--loss", loss, "Regression loss: huber|daf");
    app->add_option("--hidden", hidden, "Recurrent hidden size");
    app->add_option("--layers", layers, "Recurrent layers");
    app->add_flag("--unidirectional", unidirectional, "Forward-only recurrence");
    app->add_option("--conv-kernel", conv_kernel, "Temporal conv front-end kernel (odd, 0 = off)");
    app->add_option("--conv-channels", conv_channels, "Temporal conv channels");
    app->add_option("--epochs", epochs, "Maximum epochs");
    app->add_option("--batch", batch, "Mini-batch size");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--patience", patience, "Early-stopping patience");
    app->add_option("--threads", threads, "Gradient worker threads");
    app->add_option("--detector-hidden", detector_hidden, "Stage-1 detector hidden size");
    app->add_option("--detector-epochs", detector_epochs, "Stage-1 detector epochs");
    app->add_option("--detector-lr", detector_lr, "Stage-1 detector learning rate");
    app->add_flag("--stub-ones", stub_ones, "Stage-1 weights fixed at 1");
    app->add_option("--cutoff", cutoff, "Regression low-pass cutoff in Hz");
    app->add_option("--thresholds", thresholds, "Regression thresholds t1,t2,t3");
    app->add_flag("--sweep", sweep, "Sweep regression thresholds on validation");
    app->add_option("--seed", seed, "Model/training seed");
    app->add_option("--split-seed", split_seed, "Subject split seed");
  }

  pb::PipelineConfig resolve(const CLI::App *app) const {
    pb::PipelineConfig c;
    if (!config_file.empty()) {
      pb::json j = pb::read_json_file(config_file);
      c = pb::pipeline_config_from_json(j.contains("config") ? j.at("config") : j);
    }
    auto given = [&](const char *flag) { return app->count(flag) > 0; };
    // without a config file every option (default or given) applies
    auto pick = [&](const char *flag) { return given(flag) || config_file.empty(); };
    if (pick("--manifest"))
      c.manifest = manifest;
    if (pick("--setup"))
      c.setup = setup;
    if (pick("--task"))
      c.task = pb::task_kind_from_string(task);
    if (pick("--feature"))
      c.feature = pb::feature_kind_from_string(feature);
    if (pick("--acoustic"))
      c.acoustic = pb::feature_kind_from_string(acoustic);
    if (pick("--emb"))
      c.embedding = pb::feature_kind_from_string(emb);
    if (pick("--loss"))
      c.regression_loss = pb::loss_kind_from_string(loss);
    if (pick("--hidden"))
      c.model.hidden_dim = hidden;
    if (pick("--layers"))
      c.model.layers = layers;
    if (pick("--unidirectional"))
      c.model.bidirectional = !unidirectional;
    if (pick("--conv-kernel"))
      c.model.conv_kernel = conv_kernel;
    if (pick("--conv-channels"))
      c.model.conv_channels = conv_channels;
    if (pick("--epochs"))
      c.train.max_epochs = epochs;
    if (pick("--batch"))
      c.train.batch_size = batch;
    if (pick("--lr"))
      c.train.adam.learning_rate = lr;
    if (pick("--patience"))
      c.train.patience = patience;
    if (pick("--threads"))
      c.train.threads = c.detector_train.threads = threads;
    if (pick("--seed")) {
      c.model.seed = c.train.seed = seed;
      c.detector.seed = c.detector_train.seed = seed + 1;
    }
    if (pick("--split-seed"))
      c.split_seed = split_seed;
    if (pick("--detector-hidden"))
      c.detector.hidden_dim = detector_hidden;
    if (pick("--detector-epochs"))
      c.detector_train.max_epochs = detector_epochs;
    if (pick("--detector-lr"))
      c.detector_train.adam.learning_rate = detector_lr;
    if (pick("--batch"))
      c.detector_train.batch_size = batch;
    if (pick("--patience"))
      c.detector_train.patience = patience;
    if (pick("--stub-ones"))
      c.stage1_stub_ones = stub_ones;
    if (pick("--cutoff"))
      c.postproc.cutoff_hz = cutoff;
    if (pick("--sweep"))
      c.postproc.sweep = sweep;
    if (given("--thresholds")) {
      const auto parts = split_csv(thresholds);
      if (parts.size() != 3)
        throw std::invalid_argument("--thresholds needs three values");
      c.postproc.thresholds = std::array<double, 3>{std::stod(parts[0]), std::stod(parts[1]),
                                                    std::stod(parts[2])};
    }
    if (c.manifest.empty())
      throw std::invalid_argument("a manifest is required (--manifest or --config)");
    c.validate();
    return c;
  }
};

pb::json window_ref(const pb::Window &w) {
  return {{"recording_id", w.recording_id},
          {"frame_begin", w.frame_begin},
          {"frame_end", w.frame_end},
          {"start_s", w.start_s}};
}

pb::Split split_option(const std::string &s) { return pb::split_from_string(s); }

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"pausebench: pause detection and exertion classification toolkit"};
  app.require_subcommand(1);

  // synth
  auto *synth = app.add_subcommand("synth", "Write a synthetic corpus");
  pb::SynthCorpusConfig sc;
  std::string synth_out, synth_embs;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--recordings", sc.recordings, "Number of recordings");
  synth->add_option("--subjects", sc.subjects, "Number of subjects");
  synth->add_option("--noise", sc.noise, "Feature noise level");
  synth->add_option("--margin", sc.margin, "Class separation in units of noise");
  synth->add_option("--min-duration", sc.duration_range_s[0], "Shortest recording (s)");
  synth->add_option("--max-duration", sc.duration_range_s[1], "Longest recording (s)");
  synth->add_option("--embeddings", synth_embs, "Comma-separated embedding kinds to emit");
  synth->add_flag("--audio", sc.with_audio, "Also write WAV audio");
  synth->add_option("--seed", sc.seed, "Corpus seed");

  // features
  auto *feat = app.add_subcommand("features", "Compute MFB/MFCC features");
  std::string feat_audio, feat_out, feat_kind = "mfb", feat_manifest;
  feat->add_option("--audio", feat_audio, "Single WAV input");
  feat->add_option("--manifest", feat_manifest, "Compute for every recording with audio");
  feat->add_option("--kind", feat_kind, "mfb or mfcc")->check(CLI::IsMember({"mfb", "mfcc"}));
  feat->add_option("--out", feat_out, "Output matrix path (single input)");

  // segment
  auto *seg = app.add_subcommand("segment", "List 15 s windows");
  std::string seg_manifest, seg_out;
  double seg_stride = 1.0;
  seg->add_option("--manifest", seg_manifest)->required();
  seg->add_option("--stride", seg_stride, "Stride in seconds");
  seg->add_option("--out", seg_out);

  // split
  auto *spl = app.add_subcommand("split", "Subject-disjoint train/val/test split");
  std::string spl_manifest, spl_out, spl_fracs = "0.7,0.15,0.15";
  std::uint64_t spl_seed = 0;
  spl->add_option("--manifest", spl_manifest)->required();
  spl->add_option("--fractions", spl_fracs, "train,val,test duration fractions");
  spl->add_option("--seed", spl_seed);
  spl->add_option("--out", spl_out);

  // train
  auto *trn = app.add_subcommand("train", "Train a model and write a checkpoint");
  PipelineOptions trn_opts;
  trn_opts.attach(trn);
  std::string trn_out;
  trn->add_option("--out", trn_out, "Checkpoint path")->required();

  // predict
  auto *prd = app.add_subcommand("predict", "Raw frame outputs for a split");
  std::string prd_ckpt, prd_out, prd_split = "test";
  prd->add_option("--checkpoint", prd_ckpt)->required();
  prd->add_option("--split", prd_split, "train|val|test");
  prd->add_option("--out", prd_out);

  // postproc
  auto *pp = app.add_subcommand("postproc", "Post-process raw outputs to labels");
  std::string pp_in, pp_out, pp_thresholds;
  double pp_cutoff = 0.05;
  pp->add_option("--input", pp_in, "predict output")->required();
  pp->add_option("--cutoff", pp_cutoff, "Regression low-pass cutoff (Hz)");
  pp->add_option("--thresholds", pp_thresholds, "t1,t2,t3");
  pp->add_option("--out", pp_out);

  // eval
  auto *ev = app.add_subcommand("eval", "Event-based accuracy of post-processed labels");
  std::string ev_in, ev_manifest, ev_out;
  int ev_tol = 10, ev_mask = 50;
  double ev_overlap = 0.3;
  bool ev_either = false;
  ev->add_option("--input", ev_in, "postproc output")->required();
  ev->add_option("--manifest", ev_manifest, "Ground-truth manifest")->required();
  ev->add_option("--tolerance", ev_tol, "Boundary tolerance (frames)");
  ev->add_option("--overlap", ev_overlap, "Minimum overlap ratio");
  ev->add_option("--mask", ev_mask, "Tail mask (frames)");
  ev->add_flag("--either-boundary", ev_either, "Accept either boundary within tolerance");
  ev->add_option("--out", ev_out);

  // exertion
  auto *ex = app.add_subcommand("exertion", "Snippet-level exertion classification");
  PipelineOptions ex_opts;
  ex_opts.attach(ex);
  std::string ex_subset = "both", ex_out;
  bool ex_raw = false;
  int ex_classes = 2;
  ex->add_option("--subset", ex_subset)->check(CLI::IsMember({"spontaneous", "both"}));
  ex->add_flag("--raw-pool", ex_raw, "Pool input features instead of backbone states");
  ex->add_option("--classes", ex_classes, "2 (Low/High) or 5");
  ex->add_option("--out", ex_out);

  // stats
  auto *st = app.add_subcommand("stats", "Corpus statistics per split");
  std::string st_manifest, st_split, st_out;
  st->add_option("--manifest", st_manifest)->required();
  st->add_option("--split", st_split, "split JSON from the split command");
  st->add_option("--out", st_out);

  // merge
  auto *mg = app.add_subcommand("merge", "Majority vote over annotator tracks");
  std::vector<std::string> mg_tracks;
  std::string mg_out;
  mg->add_option("tracks", mg_tracks, "Annotator label JSON files")->required()->expected(2, -1);
  mg->add_option("--out", mg_out);

  // serve
  auto *sv = app.add_subcommand("serve", "HTTP backend for the annotation tool");
  std::string sv_manifest, sv_host = "127.0.0.1", sv_store;
  int sv_port = 8080;
  sv->add_option("--manifest", sv_manifest)->required();
  sv->add_option("--host", sv_host);
  sv->add_option("--port", sv_port);
  sv->add_option("--store", sv_store, "Label store directory");

  // run
  auto *run = app.add_subcommand("run", "Full pipeline for one setup");
  PipelineOptions run_opts;
  run_opts.attach(run);
  std::string run_out;
  run->add_option("--out", run_out, "Report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      for (const auto &k : split_csv(synth_embs))
        sc.embeddings.push_back(pb::feature_kind_from_string(k));
      const auto m = pb::write_synth_corpus(synth_out, sc);
      std::cout << "wrote " << m.records.size() << " recordings to "
                << (fs::path(synth_out) / "manifest.json").string() << "\n";
    } else if (*feat) {
      const auto kind = pb::feature_kind_from_string(feat_kind);
      auto compute = [&](const fs::path &wav) {
        return pb::extract_acoustic(pb::load_audio(wav), kind);
      };
      if (!feat_audio.empty()) {
        if (feat_out.empty())
          throw std::invalid_argument("--out is required with --audio");
        pb::write_matrix(feat_out, compute(feat_audio));
      } else if (!feat_manifest.empty()) {
        auto m = pb::load_manifest(feat_manifest);
        int done = 0;
        for (auto &e : m.records) {
          if (e.audio.empty())
            continue;
          const std::string rel = "features/" + e.meta.id + "." + feat_kind + ".f32";
          pb::write_matrix(m.resolve(rel), compute(m.resolve(e.audio)));
          e.matrices[feat_kind] = rel;
          ++done;
        }
        pb::save_manifest(feat_manifest, m);
        std::cout << "computed " << feat_kind << " for " << done << " recordings\n";
      } else {
        throw std::invalid_argument("give --audio or --manifest");
      }
    } else if (*seg) {
      const auto m = pb::load_manifest(seg_manifest);
      pb::json out = pb::json::array();
      for (const auto &e : m.records)
        for (const auto &w : pb::segment_windows(e.meta, seg_stride))
          out.push_back(pb::to_json(w));
      emit(pb::json{{"stride_s", seg_stride}, {"window_s", pb::kWindowSeconds}, {"windows", out}},
           seg_out);
    } else if (*spl) {
      const auto m = pb::load_manifest(spl_manifest);
      const auto f = split_csv(spl_fracs);
      if (f.size() != 3)
        throw std::invalid_argument("--fractions needs three values");
      std::vector<pb::RecordingMeta> metas;
      for (const auto &e : m.records)
        metas.push_back(e.meta);
      const auto spec = pb::split_by_subject(
          metas, {std::stod(f[0]), std::stod(f[1]), std::stod(f[2])}, spl_seed);
      if (!spec.balanced)
        std::clog << "warning: split durations deviate from targets by more than 5 points\n";
      emit(pb::to_json(spec), spl_out);
    } else if (*trn) {
      const auto cfg = trn_opts.resolve(trn);
      const auto pc = pb::prepare_corpus(cfg);
      const auto b = pb::train_backbone(cfg, pc);
      pb::json extra{{"pipeline", pb::to_json(cfg)}, {"training", pb::to_json(b.history)},
                     {"protocol", pb::protocol_block(cfg)}};
      pb::save_checkpoint(trn_out, b.model, extra);
      if (b.detector)
        pb::save_checkpoint(trn_out + ".stage1", *b.detector,
                            {{"training", pb::to_json(*b.detector_history)}});
      std::cout << "best epoch " << b.history.best_epoch << ", validation loss "
                << b.history.best_val_loss << "\n";
    } else if (*prd) {
      const auto ck = pb::load_checkpoint(prd_ckpt);
      const auto cfg = pb::pipeline_config_from_json(ck.header.at("extra").at("pipeline"));
      std::optional<pb::SequenceModel> det;
      if (cfg.setup == 3 && !cfg.stage1_stub_ones)
        det.emplace(pb::load_checkpoint(prd_ckpt + ".stage1").model);
      const auto pc = pb::prepare_corpus(cfg);
      const auto split = split_option(prd_split);
      const double stride = split == pb::Split::Test ? cfg.test_stride_s : cfg.train_stride_s;
      pb::json windows = pb::json::array();
      for (const auto &w : pb::cut_windows(pc, split, stride)) {
        const pb::Matrix out = ck.model.forward(pb::model_input(cfg, w, det ? &*det : nullptr));
        pb::json j = window_ref(w.window);
        std::vector<std::vector<double>> o(static_cast<std::size_t>(out.rows()));
        for (Eigen::Index t = 0; t < out.rows(); ++t)
          for (Eigen::Index k = 0; k < out.cols(); ++k)
            o[static_cast<std::size_t>(t)].push_back(out(t, k));
        j["output"] = o;
        windows.push_back(j);
      }
      emit(pb::json{{"task", std::string(pb::to_string(cfg.task))},
                    {"split", prd_split},
                    {"config", pb::to_json(cfg)},
                    {"windows", windows}},
           prd_out);
    } else if (*pp) {
      const pb::json in = pb::read_json_file(pp_in);
      const auto task = pb::task_kind_from_string(in.at("task").get<std::string>());
      pb::PostprocConfig pcfg;
      if (in.contains("config") && in.at("config").contains("postproc"))
        pcfg = pb::postproc_config_from_json(in.at("config").at("postproc"));
      if (pp->count("--cutoff"))
        pcfg.cutoff_hz = pp_cutoff;
      std::array<double, 3> th = pcfg.thresholds.value_or(std::array<double, 3>{0.5, 1.5, 2.5});
      if (!pp_thresholds.empty()) {
        const auto parts = split_csv(pp_thresholds);
        if (parts.size() != 3)
          throw std::invalid_argument("--thresholds needs three values");
        th = {std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])};
        pcfg.thresholds = th;
      }
      pcfg.validate();
      pb::json windows = pb::json::array();
      for (const auto &w : in.at("windows")) {
        const auto rows = w.at("output").get<std::vector<std::vector<double>>>();
        pb::Matrix out(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(rows.at(0).size()));
        for (std::size_t t = 0; t < rows.size(); ++t)
          for (std::size_t k = 0; k < rows[t].size(); ++k)
            out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = rows[t][k];
        const auto labels = pb::postprocess_output(out, task, pcfg, th);
        pb::json j = w;
        j.erase("output");
        j["labels"] = labels.codes();
        windows.push_back(j);
      }
      emit(pb::json{{"postproc", pb::to_json(pcfg)}, {"windows", windows}}, pp_out);
    } else if (*ev) {
      const pb::json in = pb::read_json_file(ev_in);
      const auto m = pb::load_manifest(ev_manifest);
      pb::MatchConfig mc{ev_tol, ev_overlap, !ev_either};
      mc.validate();
      pb::EventCounts counts;
      std::map<std::string, pb::FrameLabelSeq> gt_cache;
      for (const auto &w : in.at("windows")) {
        const std::string id = w.at("recording_id");
        if (!gt_cache.count(id))
          gt_cache.emplace(id, pb::load_labels(m.resolve(m.find(id).labels)));
        const auto &gt = gt_cache.at(id);
        const int b = w.at("frame_begin"), e = w.at("frame_end");
        std::vector<pb::PauseType> slice(gt.labels().begin() + b, gt.labels().begin() + e);
        const auto pred = pb::FrameLabelSeq::from_codes(w.at("labels").get<std::vector<int>>());
        counts += pb::score_window(pred, pb::FrameLabelSeq(std::move(slice)), ev_mask, mc);
      }
      emit(pb::json{{"match", pb::to_json(mc)},
                    {"mask_tail_frames", ev_mask},
                    {"metrics", pb::to_json(pb::metrics_from_counts(counts))}},
           ev_out);
    } else if (*ex) {
      pb::ExertionConfig ec;
      ec.base = ex_opts.resolve(ex);
      ec.spontaneous_only = ex_subset == "spontaneous";
      ec.use_backbone = !ex_raw;
      ec.num_classes = ex_classes;
      ec.seed = ec.base.train.seed;
      emit(pb::run_exertion(ec), ex_out);
    } else if (*st) {
      const auto m = pb::load_manifest(st_manifest);
      std::vector<pb::RecordingMeta> metas;
      std::map<std::string, pb::FrameLabelSeq> labels;
      for (const auto &e : m.records) {
        metas.push_back(e.meta);
        if (!e.labels.empty() && fs::exists(m.resolve(e.labels)))
          labels.emplace(e.meta.id, pb::load_labels(m.resolve(e.labels)));
      }
      std::map<std::string, std::string> split_of;
      if (!st_split.empty())
        for (const auto &[subj, sp] : pb::split_spec_from_json(pb::read_json_file(st_split)).assignment)
          split_of[subj] = std::string(pb::to_string(sp));
      emit(pb::to_json(pb::corpus_stats(metas, labels, split_of)), st_out);
    } else if (*mg) {
      std::vector<pb::AnnotationTrack> tracks;
      for (const auto &p : mg_tracks) {
        auto t = pb::annotation_track_from_json(pb::read_json_file(p));
        if (t.annotator_id.empty())
          t.annotator_id = fs::path(p).stem().string();
        tracks.push_back(std::move(t));
      }
      emit(pb::merged_to_json(pb::majority_vote(tracks)), mg_out);
    } else if (*sv) {
      pb::AnnotationService service(pb::load_manifest(sv_manifest), sv_store);
      httplib::Server srv;
      service.bind(srv);
      std::cout << "serving " << service.manifest().records.size() << " recordings on http://"
                << sv_host << ":" << sv_port << "\n"
                << std::flush;
      if (!srv.listen(sv_host, sv_port))
        throw std::runtime_error("cannot listen on " + sv_host + ":" + std::to_string(sv_port));
    } else if (*run) {
      emit(pb::run_pipeline(run_opts.resolve(run)), run_out);
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
