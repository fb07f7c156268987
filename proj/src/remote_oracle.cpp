#include "meqa/remote_oracle.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <regex>

#include "httplib.h"
#include "json.hpp"

namespace meqa {

using nlohmann::json;

void EndpointConfig::validate() const {
    if (url.empty()) throw ValidationError("oracle endpoint url must be set");
    if (!(timeout_s > 0.0) || !std::isfinite(timeout_s)) throw ValidationError("oracle timeout must be positive");
    if (retries < 0) throw ValidationError("oracle retries must be >= 0");
    if (max_image_bytes == 0) throw ValidationError("oracle max_image_bytes must be positive");
}

namespace {

class HttpTransport : public Transport {
public:
    explicit HttpTransport(const std::string& url) {
        static const std::regex re(R"(^(http://[^/]+)(/.*)?$)");
        std::smatch m;
        if (!std::regex_match(url, m, re))
            throw ValidationError("oracle url '" + url + "' must look like http://host[:port]/path");
        base_ = m[1].str();
        path_ = m[2].matched ? m[2].str() : "/";
    }

    TransportReply post(const std::string& body, const std::map<std::string, std::string>& headers,
                        double timeout_s) override {
        httplib::Client client(base_);
        const auto usec = std::chrono::microseconds(static_cast<long long>(timeout_s * 1e6));
        client.set_connection_timeout(usec);
        client.set_read_timeout(usec);
        client.set_write_timeout(usec);
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        auto res = client.Post(path_, h, body, "application/json");
        if (!res) {
            const auto err = res.error();
            if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                throw OracleTimeoutError("oracle request to " + base_ + path_ + " timed out");
            throw OracleError("oracle request to " + base_ + path_ + " failed: " + httplib::to_string(err));
        }
        return {res->status, res->body};
    }

private:
    std::string base_;
    std::string path_;
};

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

std::unique_ptr<Transport> make_http_transport(const std::string& url) { return std::make_unique<HttpTransport>(url); }

std::string encode_request(const OracleRequest& request, std::size_t max_image_bytes) {
    json images = json::array();
    for (std::size_t i = 0; i < request.images.size(); ++i) {
        const auto png = encode_png(request.images[i].image);
        if (png.size() > max_image_bytes)
            throw OracleImageTooLargeError("image " + std::to_string(i) + " is " + std::to_string(png.size()) +
                                           " bytes encoded, cap is " + std::to_string(max_image_bytes));
        images.push_back(base64_encode(png));
    }
    return json{{"template_id", template_name(request.template_id)}, {"prompt", request.prompt}, {"images", images}}
        .dump();
}

std::string decode_reply(const std::string& body) {
    try {
        const json j = json::parse(body);
        return j.at("text").get<std::string>();
    } catch (const json::exception& e) {
        throw OracleError(std::string("malformed oracle reply: ") + e.what());
    }
}

RemoteOracle::RemoteOracle(EndpointConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
    if (!transport_) throw InvalidArgument("remote oracle needs a transport");
}

RemoteOracle::RemoteOracle(EndpointConfig config)
    : RemoteOracle(config, std::shared_ptr<Transport>(make_http_transport(config.url))) {
    config_.validate();
}

std::string RemoteOracle::complete(const OracleRequest& request) {
    const std::string body = encode_request(request, config_.max_image_bytes);
    std::map<std::string, std::string> headers;
    if (!config_.token_env.empty())
        if (const char* token = std::getenv(config_.token_env.c_str()); token && *token)
            headers["Authorization"] = std::string("Bearer ") + token;

    for (int attempt = 0;; ++attempt) {
        ++attempts_;
        const bool last = attempt >= config_.retries;
        TransportReply reply;
        try {
            reply = transport_->post(body, headers, config_.timeout_s);
        } catch (const OracleError&) {
            if (last) throw;
            continue;
        }
        if (reply.status >= 200 && reply.status < 300) return decode_reply(reply.body);
        if (last || !retryable_status(reply.status))
            throw OracleHttpError(reply.status, "oracle endpoint returned status " + std::to_string(reply.status));
    }
}

}  // namespace meqa
