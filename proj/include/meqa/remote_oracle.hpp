#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>

#include "meqa/oracle.hpp"

namespace meqa {

struct EndpointConfig {
    std::string url;                          // http://host:port/path
    std::string token_env = "MEQA_ORACLE_TOKEN";
    double timeout_s = 30.0;
    int retries = 2;                          // extra attempts after the first
    std::size_t max_image_bytes = 1u << 20;   // per encoded PNG

    void validate() const;
};

struct TransportReply {
    int status = 0;
    std::string body;
};

// Sends one POST. Throws OracleTimeoutError on timeout and OracleError when no
// reply arrives at all.
class Transport {
public:
    virtual ~Transport() = default;
    virtual TransportReply post(const std::string& body, const std::map<std::string, std::string>& headers,
                                double timeout_s) = 0;
};

std::unique_ptr<Transport> make_http_transport(const std::string& url);

// JSON body {template_id, prompt, images: [base64 PNG]}. Throws
// OracleImageTooLargeError when an encoded image exceeds the cap.
std::string encode_request(const OracleRequest& request, std::size_t max_image_bytes);

// Reply JSON {text}; throws OracleError when the body does not match.
std::string decode_reply(const std::string& body);

class RemoteOracle : public Oracle {
public:
    RemoteOracle(EndpointConfig config, std::shared_ptr<Transport> transport);
    explicit RemoteOracle(EndpointConfig config);

    std::string complete(const OracleRequest& request) override;
    int attempts() const { return attempts_; }

private:
    EndpointConfig config_;
    std::shared_ptr<Transport> transport_;
    int attempts_ = 0;
};

}  // namespace meqa
