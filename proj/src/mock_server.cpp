#include "httplib.h"

#include <deque>
#include <thread>

#include "capdistill/mock.hpp"

namespace capdistill {

struct MockHttpServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  mutable std::mutex mu;
  std::map<std::string, std::pair<std::string, std::string>> images;
  std::deque<int> failures;
  std::vector<Request> log;
  MockEmbeddingProvider embedder{16, 7};

  void record(const httplib::Request& req) {
    std::lock_guard lock(mu);
    log.push_back({req.method, req.path});
  }
};

MockHttpServer::MockHttpServer() : impl_(std::make_unique<Impl>()) {
  Impl* impl = impl_.get();

  impl->server.Post("/lvlm", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->record(req);
    {
      std::lock_guard lock(impl->mu);
      if (!impl->failures.empty()) {
        res.status = impl->failures.front();
        impl->failures.pop_front();
        res.set_content(R"({"error":"injected failure"})", "application/json");
        return;
      }
    }
    const Json body = Json::parse(req.body, nullptr, false);
    std::string prompt, image;
    if (!body.is_discarded() && body.contains("messages")) {
      for (const auto& part : body["messages"][0]["content"]) {
        if (part.value("type", "") == "text") prompt = part.value("text", "");
        if (part.value("type", "") == "image") image = part.value("data_base64", part.value("url", ""));
      }
    }
    if (prompt.empty()) {
      res.status = 400;
      res.set_content(R"({"error":"missing prompt"})", "application/json");
      return;
    }
    Json out;
    out["content"] = MockLvlmClient::respond(prompt, image);
    res.set_content(out.dump(), "application/json");
  });

  impl->server.Post("/embeddings", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->record(req);
    const Json body = Json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.contains("input")) {
      res.status = 400;
      return;
    }
    Json out;
    out["data"] = Json::array();
    std::size_t i = 0;
    for (const auto& text : body["input"]) {
      Json row;
      row["index"] = i++;
      row["embedding"] = impl->embedder.embed_one(text.get<std::string>());
      out["data"].push_back(std::move(row));
    }
    res.set_content(out.dump(), "application/json");
  });

  impl->server.Get(R"(/images/(.+))", [impl](const httplib::Request& req, httplib::Response& res) {
    impl->record(req);
    std::lock_guard lock(impl->mu);
    auto it = impl->images.find(req.matches[1]);
    if (it == impl->images.end()) {
      res.status = 404;
      return;
    }
    res.set_content(it->second.first, it->second.second);
  });

  impl->port = impl->server.bind_to_any_port("127.0.0.1");
  if (impl->port <= 0) throw std::runtime_error("mock server could not bind a port");
  impl->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  impl->server.wait_until_ready();
}

MockHttpServer::~MockHttpServer() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockHttpServer::base_url() const { return "http://127.0.0.1:" + std::to_string(impl_->port); }

void MockHttpServer::add_image(const std::string& name, std::string bytes, std::string content_type) {
  std::lock_guard lock(impl_->mu);
  impl_->images[name] = {std::move(bytes), std::move(content_type)};
}

void MockHttpServer::fail_next(std::size_t count, int status) {
  std::lock_guard lock(impl_->mu);
  for (std::size_t i = 0; i < count; ++i) impl_->failures.push_back(status);
}

std::vector<MockHttpServer::Request> MockHttpServer::requests() const {
  std::lock_guard lock(impl_->mu);
  return impl_->log;
}

}  // namespace capdistill
